"""Deferral-curve evaluation, hyperparameter selection, and trial statistics.

A deferral curve traces mean realized quality (1 - loss) against mean cost
as the cost weight lambda sweeps a grid. Curve summaries normalize cost by
the most expensive LLM in the evaluated pool, so areas are comparable across
pools of different price ranges.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .clustering import fit_kmeans, assign_all
from .datamodel import LabelMatrix
from .errors import InsufficientDataError
from .llm_features import cluster_error_vector, raw_error_vector
from .routing import (
    ClusterEstimator,
    ConvexHullPolicy,
    LossEstimator,
    KnnEstimator,
    argmin_adjusted_rows,
)

LARGE_LAMBDA_SENTINEL = 1e9


def default_lambda_grid(costs, n_points: int = 50) -> np.ndarray:
    """Geometric lambda grid scaled to the pool's price range.

    50 points spanning [1e-4, 1e2] divided by the maximum pool cost, plus
    lambda = 0 and a large sentinel that forces the cheapest viable LLM.
    """
    costs = np.asarray(costs, dtype=np.float64)
    if costs.size == 0:
        raise ValueError("need at least one cost")
    top = float(costs.max())
    if top <= 0:
        top = 1.0
    grid = np.geomspace(1e-4 / top, 1e2 / top, n_points)
    return np.concatenate([[0.0], grid, [LARGE_LAMBDA_SENTINEL / top]])


@dataclass(frozen=True, eq=False)
class DeferralCurve:
    """Mean cost and quality per lambda, with the cost normalizer attached.

    ``lambdas`` is strictly increasing. ``n_skipped`` counts prompts dropped
    from every point because no pool LLM had an observed label for them.
    """

    lambdas: np.ndarray
    mean_costs: np.ndarray
    mean_qualities: np.ndarray
    normalization: float
    n_skipped: int = 0

    def __post_init__(self):
        lams = np.asarray(self.lambdas, dtype=np.float64)
        costs = np.asarray(self.mean_costs, dtype=np.float64)
        quals = np.asarray(self.mean_qualities, dtype=np.float64)
        if not (lams.ndim == 1 and lams.shape == costs.shape == quals.shape):
            raise ValueError("lambdas, mean_costs, mean_qualities must be matching 1-D arrays")
        if lams.size == 0:
            raise ValueError("curve needs at least one point")
        if np.any(np.diff(lams) <= 0):
            raise ValueError("lambdas must be strictly increasing")
        if self.normalization <= 0:
            raise ValueError("normalization must be positive")
        object.__setattr__(self, "lambdas", lams)
        object.__setattr__(self, "mean_costs", costs)
        object.__setattr__(self, "mean_qualities", quals)

    @property
    def norm_costs(self) -> np.ndarray:
        return self.mean_costs / self.normalization

    def __eq__(self, other):
        if not isinstance(other, DeferralCurve):
            return NotImplemented
        return (
            self.normalization == other.normalization
            and self.n_skipped == other.n_skipped
            and np.array_equal(self.lambdas, other.lambdas)
            and np.array_equal(self.mean_costs, other.mean_costs)
            and np.array_equal(self.mean_qualities, other.mean_qualities)
        )

    def to_csv(self, extra: dict[str, np.ndarray] | None = None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        header = ["lambda", "mean_cost", "norm_cost", "mean_quality"]
        extra = extra or {}
        header += list(extra)
        writer.writerow(header)
        norm = self.norm_costs
        for i in range(self.lambdas.size):
            row = [
                _sig9(self.lambdas[i]),
                _sig9(self.mean_costs[i]),
                _sig9(norm[i]),
                _sig9(self.mean_qualities[i]),
            ]
            row += [_sig9(extra[name][i]) for name in extra]
            writer.writerow(row)
        return buf.getvalue()

    def save_csv(self, path, extra: dict[str, np.ndarray] | None = None) -> None:
        Path(path).write_text(self.to_csv(extra), encoding="utf-8")

    @classmethod
    def from_csv(cls, text: str, normalization: float | None = None) -> "DeferralCurve":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0][:4] != ["lambda", "mean_cost", "norm_cost", "mean_quality"]:
            raise ValueError("curve CSV must start with lambda,mean_cost,norm_cost,mean_quality")
        lams, costs, ncosts, quals = [], [], [], []
        for row in rows[1:]:
            if not row:
                continue
            lams.append(float(row[0]))
            costs.append(float(row[1]))
            ncosts.append(float(row[2]))
            quals.append(float(row[3]))
        if normalization is None:
            # recover the normalizer from any point with nonzero cost
            normalization = 1.0
            for c, nc in zip(costs, ncosts):
                if nc > 0:
                    normalization = c / nc
                    break
        return cls(
            lambdas=np.asarray(lams),
            mean_costs=np.asarray(costs),
            mean_qualities=np.asarray(quals),
            normalization=float(normalization),
        )

    @classmethod
    def load_csv(cls, path) -> "DeferralCurve":
        return cls.from_csv(Path(path).read_text(encoding="utf-8"))


def _sig9(x: float) -> str:
    return format(float(x), ".9g")


@dataclass(frozen=True)
class CurveMetrics:
    """Deferral-curve summaries on the normalized cost axis [0, 1]."""

    area: float
    area_50: float
    qnc: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "area": float(self.area),
                "area_50": float(self.area_50),
                "qnc": "inf" if math.isinf(self.qnc) else float(self.qnc),
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "CurveMetrics":
        doc = json.loads(text)
        qnc = doc["qnc"]
        return cls(
            area=float(doc["area"]),
            area_50=float(doc["area_50"]),
            qnc=math.inf if qnc == "inf" else float(qnc),
        )


def sweep(
    estimator: LossEstimator,
    test_embeddings,
    test_labels: LabelMatrix,
    pool: Sequence[tuple],
    lambdas=None,
) -> DeferralCurve:
    """Deferral curve of the plug-in router over a lambda grid.

    ``pool`` pairs each estimator reference with its cost, in the same order as
    the label matrix columns. Each prompt is routed by the cost-adjusted
    argmin at every lambda. Prompts whose chosen LLM has no observed label
    enter the cost average but not the quality average; prompts with no
    observed label at all are skipped and counted in ``n_skipped``. Mean
    cost is verified to be non-increasing along the grid.
    """
    pool = list(pool)
    if not pool:
        raise ValueError("pool is empty")
    if test_labels.n_llms != len(pool):
        raise ValueError("label matrix width does not match the pool")
    x = np.asarray(test_embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != test_labels.n_prompts:
        raise ValueError("embeddings and labels disagree on the number of prompts")
    costs = np.array([float(c) for _, c in pool], dtype=np.float64)
    if np.any(costs < 0):
        raise ValueError("costs must be >= 0")
    if lambdas is None:
        lambdas = default_lambda_grid(costs)
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if np.any(lambdas < 0):
        raise ValueError("lambdas must be >= 0")

    keep = test_labels.mask.any(axis=1)
    n_skipped = int((~keep).sum())
    if not keep.any():
        raise InsufficientDataError("every test prompt is fully unlabeled")
    est = estimator.estimate_matrix(x, [ref for ref, _ in pool])[keep]
    losses = test_labels.losses[keep]
    mask = test_labels.mask[keep]

    mean_costs = np.empty(lambdas.size)
    mean_quals = np.empty(lambdas.size)
    rows = np.arange(est.shape[0])
    for t, lam in enumerate(lambdas):
        chosen = argmin_adjusted_rows(est + lam * costs[None, :], costs)
        mean_costs[t] = costs[chosen].mean()
        seen = mask[rows, chosen]
        if not seen.any():
            raise InsufficientDataError(f"no observed labels among routed choices at lambda={lam}")
        mean_quals[t] = 1.0 - losses[rows, chosen][seen].mean()
    if np.any(np.diff(mean_costs) > 0):
        raise AssertionError("mean cost increased along the lambda grid")
    return DeferralCurve(
        lambdas=lambdas,
        mean_costs=mean_costs,
        mean_qualities=mean_quals,
        normalization=float(costs.max()) if costs.max() > 0 else 1.0,
        n_skipped=n_skipped,
    )


def _piecewise_points(curve: DeferralCurve) -> tuple[np.ndarray, np.ndarray]:
    """Curve points sorted by normalized cost and extended flat to 0 and 1."""
    x = curve.norm_costs
    q = curve.mean_qualities
    order = np.argsort(x, kind="stable")
    x = x[order]
    q = q[order]
    xs = [0.0, *x.tolist(), 1.0]
    qs = [q[0], *q.tolist(), q[-1]]
    return np.asarray(xs), np.asarray(qs)


def metrics(curve: DeferralCurve, peak_quality: float) -> CurveMetrics:
    """Area, half-budget area, and quality-neutral cost of a curve.

    The curve is treated as piecewise linear on normalized cost, extended
    flat to the ends of [0, 1]. ``area`` is the integral over [0, 1];
    ``area_50`` integrates over [0, 0.5] and divides by 0.5, so both score a
    constant-quality curve identically. ``qnc`` is the smallest normalized
    cost at which the curve reaches ``peak_quality`` (the best single LLM's
    mean quality), +inf if it never does.
    """
    if not 0 <= peak_quality <= 1:
        raise ValueError(f"peak_quality must lie in [0, 1], got {peak_quality}")
    xs, qs = _piecewise_points(curve)

    def integrate(hi: float) -> float:
        total = 0.0
        for i in range(len(xs) - 1):
            x0, x1 = xs[i], min(xs[i + 1], hi)
            if x1 <= x0:
                continue
            q0 = qs[i]
            q1 = qs[i] if xs[i + 1] == xs[i] else qs[i] + (qs[i + 1] - qs[i]) * (
                (x1 - xs[i]) / (xs[i + 1] - xs[i])
            )
            total += 0.5 * (q0 + q1) * (x1 - x0)
            if xs[i + 1] >= hi:
                break
        return total

    area = integrate(1.0)
    area_50 = integrate(0.5) / 0.5

    qnc = math.inf
    for i in range(len(xs)):
        if qs[i] >= peak_quality:
            qnc = min(qnc, xs[i])
    for i in range(len(xs) - 1):
        q0, q1 = qs[i], qs[i + 1]
        if xs[i + 1] > xs[i] and min(q0, q1) < peak_quality <= max(q0, q1):
            cross = xs[i] + (peak_quality - q0) / (q1 - q0) * (xs[i + 1] - xs[i])
            if cross >= xs[i]:
                qnc = min(qnc, cross)
    return CurveMetrics(area=float(area), area_50=float(area_50), qnc=qnc)


def peak_single_quality(test_labels: LabelMatrix) -> float:
    """Best per-LLM mean observed quality; the QNC reference point."""
    best = -1.0
    for j in range(test_labels.n_llms):
        losses, seen = test_labels.column(j)
        if seen.any():
            best = max(best, 1.0 - float(losses[seen].mean()))
    if best < 0:
        raise InsufficientDataError("no observed labels in the test matrix")
    return best


def zero_router_curve(policy: ConvexHullPolicy, test_labels: LabelMatrix, budgets) -> DeferralCurve:
    """Analytic quality/cost of budget mixing, evaluated on test labels.

    The label matrix columns must follow the pool ordering the policy was
    built from. Interior budgets hit their target cost exactly; budgets
    outside the hull's range clamp to the end LLMs. The returned curve is
    parameterized by budget (stored in the lambda slot, increasing), so its
    cost rises with the parameter rather than falling.
    """
    budgets = np.asarray(budgets, dtype=np.float64)
    if budgets.ndim != 1 or budgets.size == 0:
        raise ValueError("budgets must be a non-empty 1-D array")
    if np.any(np.diff(budgets) <= 0):
        raise ValueError("budgets must be strictly increasing")
    quality = {}
    for pos, (llm_index, _, _) in enumerate(policy.hull):
        losses, seen = test_labels.column(llm_index)
        if not seen.any():
            raise InsufficientDataError(f"hull llm column {llm_index} has no observed labels")
        quality[pos] = 1.0 - float(losses[seen].mean())
    mean_costs = np.empty(budgets.size)
    mean_quals = np.empty(budgets.size)
    for t, budget in enumerate(budgets):
        lo, hi, p = policy.mixing(float(budget))
        if lo == hi:
            mean_costs[t] = policy.hull[lo][1]
            mean_quals[t] = quality[lo]
        else:
            mean_costs[t] = float(budget)
            mean_quals[t] = p * quality[lo] + (1.0 - p) * quality[hi]
    return DeferralCurve(
        lambdas=budgets,
        mean_costs=mean_costs,
        mean_qualities=mean_quals,
        normalization=policy.max_input_cost if policy.max_input_cost > 0 else 1.0,
    )


def default_budget_grid(policy: ConvexHullPolicy, n_points: int = 52) -> np.ndarray:
    lo = policy.hull[0][1]
    hi = policy.hull[-1][1]
    if hi <= lo:
        return np.asarray([lo])
    return np.linspace(lo, hi, n_points)


def aggregate_trials(curves: Sequence[DeferralCurve]) -> tuple[DeferralCurve, np.ndarray]:
    """Pointwise mean curve plus two-sigma standard-error half-widths.

    All curves must share the lambda grid and normalization. The half-width
    at each grid point is 2 * std / sqrt(n) with the sample (n-1) std, i.e.
    a two-sigma normal band; a single trial gets half-width 0.
    """
    curves = list(curves)
    if not curves:
        raise ValueError("no curves to aggregate")
    base = curves[0]
    for c in curves[1:]:
        if not np.array_equal(c.lambdas, base.lambdas):
            raise ValueError("curves disagree on the lambda grid")
        if c.normalization != base.normalization:
            raise ValueError("curves disagree on the cost normalization")
    quals = np.stack([c.mean_qualities for c in curves])
    costs = np.stack([c.mean_costs for c in curves])
    n = len(curves)
    half = np.zeros(base.lambdas.size) if n == 1 else 2.0 * quals.std(axis=0, ddof=1) / math.sqrt(n)
    mean_curve = DeferralCurve(
        lambdas=base.lambdas.copy(),
        mean_costs=costs.mean(axis=0),
        mean_qualities=quals.mean(axis=0),
        normalization=base.normalization,
        n_skipped=sum(c.n_skipped for c in curves),
    )
    return mean_curve, half


def sign_test(pairs: Sequence[tuple[float, float]]) -> float:
    """Two-sided exact binomial sign test on paired scores.

    Ties are dropped; if every pair ties there is nothing to test and
    InsufficientDataError is raised.
    """
    wins = sum(1 for a, b in pairs if a > b)
    losses = sum(1 for a, b in pairs if a < b)
    n = wins + losses
    if n == 0:
        raise InsufficientDataError("all pairs tie; the sign test is undefined")
    s = min(wins, losses)
    tail = sum(math.comb(n, i) for i in range(s + 1))
    p = 2 * Fraction(tail, 2**n)
    return float(min(p, Fraction(1)))


ROUTER_KINDS = ("knn", "kmeans_cluster", "learned_map")


def default_candidate_grid(router_kind: str, n_val: int, max_points: int = 8) -> list[int]:
    """Log-spaced candidate counts within each method's recommended range.

    k-NN candidates run from 5 to a third of the validation size; cluster
    methods from 3 to a fiftieth of it. Degenerate ranges collapse toward
    the fallback value.
    """
    if router_kind not in ROUTER_KINDS:
        raise ValueError(f"unknown router kind {router_kind!r}")
    if n_val < 1:
        raise ValueError(f"n_val must be >= 1, got {n_val}")
    if router_kind == "knn":
        lo, hi = 5, n_val // 3
    else:
        lo, hi = 3, n_val // 50
    if hi < lo:
        return [fallback_k(router_kind, n_val)]
    pts = np.unique(np.round(np.geomspace(lo, hi, max_points)).astype(int))
    return [int(p) for p in pts if lo <= p <= hi]


def fallback_k(router_kind: str, n_val: int) -> int:
    """Count to use when no training LLMs are available for selection."""
    if router_kind not in ROUTER_KINDS:
        raise ValueError(f"unknown router kind {router_kind!r}")
    if n_val < 1:
        raise ValueError(f"n_val must be >= 1, got {n_val}")
    if router_kind == "knn":
        return max(1, int(math.floor(math.sqrt(n_val))))
    return max(1, n_val // 50)


def score_candidates(
    candidates: Sequence[int],
    train_embeddings,
    train_labels: LabelMatrix,
    val_embeddings,
    val_labels: LabelMatrix,
    costs,
    router_kind: str,
    lambdas=None,
    seed: int = 0,
    build_learned: Callable | None = None,
) -> list[tuple[int, float]]:
    """Deferral area on the validation split for each candidate count.

    Routers are built for the training LLMs from training-split labels: k-NN
    uses training prompts as neighbors, cluster methods cluster the training
    embeddings and average training losses per cluster.
    """
    if router_kind not in ROUTER_KINDS:
        raise ValueError(f"unknown router kind {router_kind!r}")
    candidates = [int(c) for c in candidates]
    if not candidates:
        raise ValueError("no candidates to score")
    train_x = np.asarray(train_embeddings, dtype=np.float64)
    val_x = np.asarray(val_embeddings, dtype=np.float64)
    costs = np.asarray(costs, dtype=np.float64)
    if train_labels.n_llms != val_labels.n_llms or train_labels.n_llms != costs.size:
        raise ValueError("train labels, val labels, and costs disagree on the LLM count")
    if lambdas is None:
        lambdas = default_lambda_grid(costs)
    peak = peak_single_quality(val_labels)

    scores: list[tuple[int, float]] = []
    for cand in candidates:
        if router_kind == "knn":
            feats = [
                raw_error_vector(*train_labels.column(j), f"llm{j}")
                for j in range(train_labels.n_llms)
            ]
            estimator: LossEstimator = KnnEstimator(train_x, cand)
        else:
            model = fit_kmeans(train_x, cand, seed=seed)
            assignments = assign_all(model, train_x)
            feats = [
                cluster_error_vector(*train_labels.column(j), assignments, cand, f"llm{j}")
                for j in range(train_labels.n_llms)
            ]
            if router_kind == "kmeans_cluster":
                estimator = ClusterEstimator(model)
            else:
                if build_learned is None:
                    raise ValueError("learned_map scoring needs a build_learned callable")
                estimator = build_learned(model, feats, cand)
        pool = list(zip(feats, costs))
        curve = sweep(estimator, val_x, val_labels, pool, lambdas)
        scores.append((cand, metrics(curve, peak).area))
    return scores


def select_k(
    candidates: Sequence[int],
    train_embeddings,
    train_labels: LabelMatrix,
    val_embeddings,
    val_labels: LabelMatrix,
    costs,
    router_kind: str,
    lambdas=None,
    seed: int = 0,
    build_learned: Callable | None = None,
) -> int:
    """Candidate with the highest validation deferral area; ties go small."""
    scores = score_candidates(
        candidates,
        train_embeddings,
        train_labels,
        val_embeddings,
        val_labels,
        costs,
        router_kind,
        lambdas=lambdas,
        seed=seed,
        build_learned=build_learned,
    )
    best_k, best_area = scores[0]
    for cand, area in scores[1:]:
        if area > best_area or (area == best_area and cand < best_k):
            best_k, best_area = cand, area
    return best_k
