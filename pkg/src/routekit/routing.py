"""Cost-adjusted routing: send each prompt to the LLM minimizing
estimated loss plus lambda times cost.

A pool is a sequence of (llm_ref, cost) pairs. The llm_ref is whatever the
loss estimator understands: an LlmFeature for the cluster, k-NN, and
learned-map estimators, or an integer index for the static linear estimator.
Ties in the adjusted score break toward the lower cost, then the lower pool
index; the same rule is applied everywhere scores are compared.
"""

from __future__ import annotations

import json
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .clustering import ClusterModel, assign, assign_all
from .datamodel import LabelMatrix
from .llm_features import LlmFeature


def argmin_adjusted(scores: np.ndarray, costs: np.ndarray) -> int:
    """Index minimizing the score; exact ties go to lower cost, then lower index."""
    best = 0
    for m in range(1, scores.shape[0]):
        if scores[m] < scores[best] or (
            scores[m] == scores[best]
            and (costs[m] < costs[best] or (costs[m] == costs[best] and m < best))
        ):
            best = m
    return best


def argmin_adjusted_rows(scores: np.ndarray, costs: np.ndarray) -> np.ndarray:
    """Row-wise ``argmin_adjusted`` over an (n, m) score matrix."""
    low = scores.min(axis=1, keepdims=True)
    tied = scores == low
    cost_of_tied = np.where(tied, costs[None, :], np.inf)
    low_cost = cost_of_tied.min(axis=1, keepdims=True)
    winners = tied & (cost_of_tied == low_cost)
    return winners.argmax(axis=1)


@dataclass(frozen=True, eq=False)
class RoutingDecision:
    """Chosen pool index plus the per-LLM adjusted scores behind it."""

    llm_index: int
    adjusted_scores: np.ndarray
    lam: float

    def to_json(self, llm_id: str | None = None) -> str:
        doc = {
            "llm_index": int(self.llm_index),
            "llm_id": llm_id,
            "lambda": float(self.lam),
            "adjusted_scores": [float(s) for s in self.adjusted_scores],
        }
        return json.dumps(doc)


class LossEstimator(ABC):
    """Estimates the probability, in [0, 1], that an LLM errs on a prompt."""

    kind: str = "abstract"

    @abstractmethod
    def estimate(self, x: np.ndarray, llm) -> float:
        """Estimated loss of ``llm`` (an LlmFeature or pool index) on ``x``."""

    def estimate_matrix(self, embeddings: np.ndarray, llms: Sequence) -> np.ndarray:
        """(n, m) matrix of estimated losses; subclasses vectorize this."""
        embeddings = np.asarray(embeddings, dtype=np.float64)
        out = np.empty((embeddings.shape[0], len(llms)), dtype=np.float64)
        for i in range(embeddings.shape[0]):
            for m, llm in enumerate(llms):
                out[i, m] = self.estimate(embeddings[i], llm)
        return out

    def describe(self) -> dict:
        return {"kind": self.kind}


def route(estimator: LossEstimator, x, pool: Sequence[tuple], lam: float) -> RoutingDecision:
    """Pick argmin over the pool of estimate(x, llm) + lam * cost."""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    pool = list(pool)
    if not pool:
        raise ValueError("pool is empty")
    x = np.asarray(x, dtype=np.float64)
    costs = np.array([float(cost) for _, cost in pool], dtype=np.float64)
    if np.any(costs < 0):
        raise ValueError("costs must be >= 0")
    scores = np.array([estimator.estimate(x, ref) + lam * c for (ref, _), c in zip(pool, costs)])
    chosen = argmin_adjusted(scores, costs)
    return RoutingDecision(llm_index=chosen, adjusted_scores=scores, lam=float(lam))


class ClusterEstimator(LossEstimator):
    """Looks an LLM's per-cluster error up at the prompt's hard cluster."""

    kind = "cluster"

    def __init__(self, model: ClusterModel):
        self.model = model

    def _check(self, feature: LlmFeature) -> None:
        if not isinstance(feature, LlmFeature):
            raise TypeError("cluster estimator needs an LlmFeature per pool entry")
        if feature.kind not in ("cluster_error", "btl_cluster"):
            raise ValueError(f"feature kind {feature.kind!r} is not cluster-shaped")
        if len(feature) != self.model.k:
            raise ValueError(f"feature length {len(feature)} != k={self.model.k}")

    def estimate(self, x, llm) -> float:
        self._check(llm)
        return float(llm.values[assign(self.model, x)])

    def estimate_matrix(self, embeddings, llms) -> np.ndarray:
        for llm in llms:
            self._check(llm)
        idx = assign_all(self.model, np.asarray(embeddings, dtype=np.float64))
        table = np.stack([llm.values for llm in llms])  # (m, k)
        return table[:, idx].T

    def describe(self) -> dict:
        return {"kind": self.kind, "k": self.model.k}


def cluster_estimator(model: ClusterModel, feature: LlmFeature) -> ClusterEstimator:
    """Estimator for pools of per-cluster features shaped like ``feature``."""
    est = ClusterEstimator(model)
    est._check(feature)
    return est


class KnnEstimator(LossEstimator):
    """Mean loss of an LLM over the k nearest reference prompts.

    Neighbors are ranked by Euclidean distance in embedding space; ties go
    to the lower reference index.
    """

    kind = "knn"

    def __init__(self, ref_embeddings, k_neighbors: int):
        ref = np.ascontiguousarray(ref_embeddings, dtype=np.float64)
        if ref.ndim != 2 or ref.shape[0] == 0:
            raise ValueError("reference embeddings must be a non-empty (n, d) array")
        if not 1 <= k_neighbors <= ref.shape[0]:
            raise ValueError(
                f"k_neighbors must lie in [1, {ref.shape[0]}], got {k_neighbors}"
            )
        self.ref = ref
        self.k_neighbors = int(k_neighbors)

    def _check(self, feature: LlmFeature) -> None:
        if not isinstance(feature, LlmFeature):
            raise TypeError("k-NN estimator needs an LlmFeature per pool entry")
        if feature.kind != "raw_error":
            raise ValueError(f"feature kind {feature.kind!r} is not a raw error vector")
        if len(feature) != self.ref.shape[0]:
            raise ValueError(
                f"feature length {len(feature)} != reference size {self.ref.shape[0]}"
            )

    def neighbors(self, embeddings) -> np.ndarray:
        x = np.ascontiguousarray(embeddings, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        d2 = kernels.pairwise_sq_dists(x, self.ref)
        order = np.argsort(d2, axis=1, kind="stable")[:, : self.k_neighbors]
        return order[0] if single else order

    def estimate(self, x, llm) -> float:
        self._check(llm)
        return float(llm.values[self.neighbors(x)].mean())

    def estimate_matrix(self, embeddings, llms) -> np.ndarray:
        for llm in llms:
            self._check(llm)
        nn = self.neighbors(np.asarray(embeddings, dtype=np.float64))
        table = np.stack([llm.values for llm in llms])  # (m, n_ref)
        return table[:, nn].mean(axis=2).T

    def describe(self) -> dict:
        return {"kind": self.kind, "k_neighbors": self.k_neighbors}


def knn_estimator(val_embeddings, raw_features: Sequence[LlmFeature], k_neighbors: int) -> KnnEstimator:
    """k-NN estimator over the given reference prompts.

    ``raw_features`` are validated up front so a malformed pool fails here
    rather than at the first routed prompt.
    """
    est = KnnEstimator(val_embeddings, k_neighbors)
    for feature in raw_features:
        est._check(feature)
    return est


class LinearEstimator(LossEstimator):
    """Per-LLM linear predictions clamped to [0, 1]; pool refs are indices.

    Only LLMs present at fit time can be scored, so this estimator suits
    static pools.
    """

    kind = "linear"

    def __init__(self, weights: np.ndarray, intercepts: np.ndarray, ridge: float):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.intercepts = np.asarray(intercepts, dtype=np.float64)
        self.ridge = float(ridge)
        if self.weights.ndim != 2 or self.intercepts.shape != (self.weights.shape[0],):
            raise ValueError("weights must be (m, d) with matching intercepts")

    def _index(self, llm) -> int:
        if not isinstance(llm, (int, np.integer)):
            raise TypeError("linear estimator scores fitted LLMs only; pass the fit-time index")
        if not 0 <= int(llm) < self.weights.shape[0]:
            raise ValueError(f"llm index {llm} out of range")
        return int(llm)

    def estimate(self, x, llm) -> float:
        m = self._index(llm)
        x = np.asarray(x, dtype=np.float64)
        raw = float(x @ self.weights[m] + self.intercepts[m])
        return min(1.0, max(0.0, raw))

    def estimate_matrix(self, embeddings, llms) -> np.ndarray:
        idx = np.array([self._index(llm) for llm in llms], dtype=np.int64)
        x = np.asarray(embeddings, dtype=np.float64)
        raw = x @ self.weights[idx].T + self.intercepts[idx]
        return np.clip(raw, 0.0, 1.0)

    def describe(self) -> dict:
        return {"kind": self.kind, "ridge": self.ridge}


def fit_linear_estimator(train_embeddings, train_labels: LabelMatrix, ridge: float = 0.0) -> LinearEstimator:
    """Least-squares fit of one linear loss predictor per LLM.

    Minimizes, per LLM, the sum of squared residuals over its observed labels
    plus ``ridge`` times the squared weight norm (intercept unpenalized),
    via the normal equations.
    """
    x = np.asarray(train_embeddings, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("train embeddings must be (n, d)")
    if x.shape[0] != train_labels.n_prompts:
        raise ValueError("embeddings and labels disagree on the number of prompts")
    if ridge < 0:
        raise ValueError(f"ridge must be >= 0, got {ridge}")
    n, d = x.shape
    m = train_labels.n_llms
    weights = np.empty((m, d), dtype=np.float64)
    intercepts = np.empty(m, dtype=np.float64)
    penalty = np.zeros((d + 1, d + 1), dtype=np.float64)
    penalty[:d, :d] = ridge * np.eye(d)
    for j in range(m):
        y, seen = train_labels.column(j)
        if not seen.any():
            raise ValueError(f"llm column {j} has no observed labels to fit")
        design = np.hstack([x[seen], np.ones((int(seen.sum()), 1))])
        lhs = design.T @ design + penalty
        rhs = design.T @ y[seen]
        try:
            beta = np.linalg.solve(lhs, rhs)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(
                f"llm column {j}: singular normal equations; pass a positive ridge"
            ) from exc
        weights[j] = beta[:d]
        intercepts[j] = beta[d]
    return LinearEstimator(weights=weights, intercepts=intercepts, ridge=ridge)


@dataclass(frozen=True)
class ConvexHullPolicy:
    """Quality-cost frontier of a pool plus budget-mixing between neighbors.

    ``hull`` holds (llm_index, cost, mean_loss) with costs strictly
    increasing and losses strictly decreasing. ``max_input_cost`` remembers
    the most expensive LLM of the unfiltered pool for curve normalization.
    """

    hull: tuple[tuple[int, float, float], ...]
    max_input_cost: float

    def __post_init__(self):
        costs = [c for _, c, _ in self.hull]
        losses = [l for _, _, l in self.hull]
        if not self.hull:
            raise ValueError("hull is empty")
        if any(b <= a for a, b in zip(costs, costs[1:])):
            raise ValueError("hull costs must be strictly increasing")
        if any(b >= a for a, b in zip(losses, losses[1:])):
            raise ValueError("hull losses must be strictly decreasing")

    def mixing(self, budget: float) -> tuple[int, int, float]:
        """Hull positions (lo, hi) plus the probability of picking lo.

        Out-of-range budgets clamp to the nearest endpoint.
        """
        if budget < 0:
            raise ValueError(f"budget must be >= 0, got {budget}")
        costs = [c for _, c, _ in self.hull]
        if budget <= costs[0]:
            return 0, 0, 1.0
        if budget >= costs[-1]:
            last = len(self.hull) - 1
            return last, last, 1.0
        hi = next(i for i, c in enumerate(costs) if c > budget)
        lo = hi - 1
        p = (costs[hi] - budget) / (costs[hi] - costs[lo])
        return lo, hi, p


def _on_or_below_hull(points: list[tuple[int, float, float]]) -> list[tuple[int, float, float]]:
    def cross(o, a, b):
        return (a[1] - o[1]) * (b[2] - o[2]) - (a[2] - o[2]) * (b[1] - o[1])

    hull: list[tuple[int, float, float]] = []
    for p in points:
        while len(hull) >= 2 and cross(hull[-2], hull[-1], p) <= 0:
            hull.pop()
        hull.append(p)
    return hull


def build_zero_router(pool: Sequence[tuple[int, float, float]]) -> ConvexHullPolicy:
    """Lower convex hull of (cost, mean loss) after dropping dominated LLMs.

    Input entries are (llm_index, cost, mean_loss). An entry is dominated if
    another entry costs no more and loses no more, with at least one strict;
    exact duplicates keep the lowest index. Interior and collinear points of
    the remaining set are removed, leaving the frontier that budget mixing
    walks.
    """
    entries = [(int(i), float(c), float(l)) for i, c, l in pool]
    if not entries:
        raise ValueError("pool is empty")
    max_cost = max(c for _, c, _ in entries)

    kept: list[tuple[int, float, float]] = []
    for i, c, l in entries:
        dominated = False
        for i2, c2, l2 in entries:
            if i2 == i:
                continue
            if c2 <= c and l2 <= l and (c2 < c or l2 < l):
                dominated = True
                break
            if c2 == c and l2 == l and i2 < i:
                dominated = True  # exact duplicate; lowest index survives
                break
        if not dominated:
            kept.append((i, c, l))
    kept.sort(key=lambda t: (t[1], t[2], t[0]))
    hull = _on_or_below_hull(kept)
    return ConvexHullPolicy(hull=tuple(hull), max_input_cost=max_cost)


def zero_route(policy: ConvexHullPolicy, budget: float, u: float) -> int:
    """Budget-constrained random pick between the bracketing hull LLMs.

    ``u`` is the caller's uniform draw on [0, 1); the cheaper LLM is chosen
    when u < p with p = (c_hi - budget) / (c_hi - c_lo). Keeping the draw
    explicit makes callers' replays exact.
    """
    if not 0 <= u < 1:
        raise ValueError(f"u must lie in [0, 1), got {u}")
    lo, hi, p = policy.mixing(budget)
    pos = lo if u < p else hi
    return policy.hull[pos][0]
