"""Prediction-error feature vectors that stand in for an LLM.

An LLM is represented by how it fails on held-out prompts: either the raw
per-prompt loss vector, per-cluster mean losses, or per-cluster strength
scores fitted to pairwise human comparisons. New LLMs need only these
vectors to join a routing pool; nothing else is retrained.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .datamodel import LabelMatrix, LlmProfile, PairwiseRecord
from .errors import ConsistencyError, InsufficientDataError, ValidationError

FEATURE_KINDS = ("raw_error", "cluster_error", "btl_cluster")


@dataclass(frozen=True, eq=False)
class LlmFeature:
    """Per-position error estimates for one LLM plus observation counts.

    ``values[i]`` estimates the LLM's loss at position i (a validation prompt
    for raw vectors, a cluster otherwise). ``support[i]`` counts the
    observations behind the estimate; 0 marks an imputed or default entry.
    """

    llm_id: str
    kind: str
    values: np.ndarray
    support: np.ndarray

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ValidationError(f"unknown feature kind {self.kind!r}")
        values = np.asarray(self.values, dtype=np.float64)
        support = np.asarray(self.support, dtype=np.int64)
        if values.ndim != 1 or support.shape != values.shape:
            raise ValueError("values and support must be matching 1-D arrays")
        if values.size and (not np.all(np.isfinite(values)) or values.min() < 0 or values.max() > 1):
            raise ValidationError(f"llm {self.llm_id!r}: feature values must lie in [0, 1]")
        if support.size and support.min() < 0:
            raise ValidationError(f"llm {self.llm_id!r}: support counts must be >= 0")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "support", support)

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, LlmFeature):
            return NotImplemented
        return (
            self.llm_id == other.llm_id
            and self.kind == other.kind
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.support, other.support)
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "llm_id": self.llm_id,
                "kind": self.kind,
                "values": [float(v) for v in self.values],
                "support": [int(s) for s in self.support],
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "LlmFeature":
        doc = json.loads(text)
        return cls(
            llm_id=str(doc["llm_id"]),
            kind=str(doc["kind"]),
            values=np.asarray(doc["values"], dtype=np.float64),
            support=np.asarray(doc["support"], dtype=np.int64),
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "LlmFeature":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def raw_error_vector(losses, mask, llm_id: str) -> LlmFeature:
    """Per-prompt loss vector; masked entries take the LLM's mean observed loss.

    The imputation keeps every position usable by routers that index fixed
    positions; imputed entries are flagged with support 0.
    """
    losses = np.asarray(losses, dtype=np.float64).reshape(-1)
    mask = np.asarray(mask, dtype=bool).reshape(-1)
    if mask.shape != losses.shape:
        raise ValueError("losses and mask must have matching lengths")
    if not mask.any():
        raise InsufficientDataError(f"llm {llm_id!r}: no observed labels to build a raw vector")
    fill = float(losses[mask].mean())
    values = np.where(mask, losses, fill)
    return LlmFeature(llm_id=llm_id, kind="raw_error", values=values, support=mask.astype(np.int64))


def cluster_error_vector(losses, mask, assignments, k: int, llm_id: str) -> LlmFeature:
    """Mean observed loss per cluster; empty clusters take the global mean."""
    losses = np.asarray(losses, dtype=np.float64).reshape(-1)
    mask = np.asarray(mask, dtype=bool).reshape(-1)
    assignments = np.asarray(assignments, dtype=np.int64).reshape(-1)
    if not (losses.shape == mask.shape == assignments.shape):
        raise ValueError("losses, mask, and assignments must have matching lengths")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if assignments.size and (assignments.min() < 0 or assignments.max() >= k):
        raise ValueError("assignments out of range for k clusters")
    if not mask.any():
        raise InsufficientDataError(f"llm {llm_id!r}: no observed labels to build a cluster vector")
    overall = float(losses[mask].mean())
    values = np.full(k, overall, dtype=np.float64)
    support = np.zeros(k, dtype=np.int64)
    for j in range(k):
        sel = mask & (assignments == j)
        count = int(sel.sum())
        support[j] = count
        if count:
            values[j] = float(losses[sel].mean())
    return LlmFeature(llm_id=llm_id, kind="cluster_error", values=values, support=support)


def raw_features_for_pool(labels: LabelMatrix, pool: Sequence[LlmProfile]) -> list[LlmFeature]:
    if labels.n_llms != len(pool):
        raise ValueError("label matrix width does not match the pool")
    return [raw_error_vector(*labels.column(j), pool[j].id) for j in range(len(pool))]


def cluster_features_for_pool(
    labels: LabelMatrix, pool: Sequence[LlmProfile], assignments, k: int
) -> list[LlmFeature]:
    if labels.n_llms != len(pool):
        raise ValueError("label matrix width does not match the pool")
    return [
        cluster_error_vector(*labels.column(j), assignments, k, pool[j].id)
        for j in range(len(pool))
    ]


def _fit_btl_strengths(wins: np.ndarray, max_iter: int, tol: float) -> np.ndarray:
    """Minorize-maximize iteration for Bradley-Terry strengths.

    ``wins[i, j]`` counts (possibly fractional) wins of item i over item j.
    Items with no comparisons keep strength 1 and are ignored by the update.
    Items with zero total wins converge to strength 0.
    """
    m = wins.shape[0]
    totals = wins + wins.T
    strengths = np.ones(m, dtype=np.float64)
    active = totals.sum(axis=1) > 0
    win_sums = wins.sum(axis=1)
    for _ in range(max_iter):
        denom = np.zeros(m, dtype=np.float64)
        for i in np.flatnonzero(active):
            pair_mask = totals[i] > 0
            denom[i] = np.sum(totals[i, pair_mask] / (strengths[i] + strengths[pair_mask]))
        new = strengths.copy()
        idx = active & (denom > 0)
        new[idx] = win_sums[idx] / denom[idx]
        # fix the geometric mean of the positive active strengths at 1
        pos = idx & (new > 0)
        if pos.any():
            log_mean = np.mean(np.log(new[pos]))
            new[pos] = np.exp(np.log(new[pos]) - log_mean)
        delta = np.max(np.abs(new - strengths)) if m else 0.0
        strengths = new
        if delta < tol:
            break
    return strengths


def btl_cluster_scores(
    comparisons: Sequence[PairwiseRecord],
    assignments: Mapping[str, int],
    llm_ids: Sequence[str],
    k: int,
    pseudo_count: float = 0.1,
    max_iter: int = 1000,
    tol: float = 1e-8,
) -> list[LlmFeature]:
    """Per-cluster Bradley-Terry scores mapped onto the loss scale.

    Within each cluster a strength is fitted per LLM from the comparisons
    assigned there; ties count half a win each way and every observed pair
    receives ``pseudo_count`` smoothing wins in both directions. Log-strengths
    are centered to mean 0 over the LLMs that appeared in the cluster, and an
    LLM's entry is 1 - sigmoid(centered log-strength), so stronger means lower
    loss. LLMs with no comparisons in a cluster sit at 0.5 with support 0.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if pseudo_count < 0:
        raise ValueError(f"pseudo_count must be >= 0, got {pseudo_count}")
    llm_ids = list(llm_ids)
    col = {llm_id: j for j, llm_id in enumerate(llm_ids)}
    if len(col) != len(llm_ids):
        raise ValueError("duplicate llm ids")
    m = len(llm_ids)

    raw_wins = [np.zeros((m, m), dtype=np.float64) for _ in range(k)]
    counts = [np.zeros(m, dtype=np.int64) for _ in range(k)]
    for rec in comparisons:
        if rec.llm_a not in col or rec.llm_b not in col:
            missing = rec.llm_a if rec.llm_a not in col else rec.llm_b
            raise ConsistencyError(f"comparison references unknown llm id {missing!r}")
        if rec.prompt_id not in assignments:
            raise ConsistencyError(f"comparison prompt {rec.prompt_id!r} has no cluster assignment")
        cluster = int(assignments[rec.prompt_id])
        if not 0 <= cluster < k:
            raise ValueError(f"cluster assignment {cluster} out of range for k={k}")
        a, b = col[rec.llm_a], col[rec.llm_b]
        if rec.outcome == "a_wins":
            raw_wins[cluster][a, b] += 1.0
        elif rec.outcome == "b_wins":
            raw_wins[cluster][b, a] += 1.0
        else:
            raw_wins[cluster][a, b] += 0.5
            raw_wins[cluster][b, a] += 0.5
        counts[cluster][a] += 1
        counts[cluster][b] += 1

    values = np.full((m, k), 0.5, dtype=np.float64)
    for cluster in range(k):
        wins = raw_wins[cluster]
        observed_pair = (wins + wins.T) > 0
        wins = wins + pseudo_count * observed_pair
        if not observed_pair.any():
            continue
        strengths = _fit_btl_strengths(wins, max_iter=max_iter, tol=tol)
        participated = np.flatnonzero(counts[cluster] > 0)
        pos = participated[strengths[participated] > 0]
        center = float(np.mean(np.log(strengths[pos]))) if pos.size else 0.0
        for j in participated:
            if strengths[j] > 0:
                t = math.log(strengths[j]) - center
                values[j, cluster] = 1.0 / (1.0 + math.exp(t))
            else:
                values[j, cluster] = 1.0  # lost every smoothing-free comparison
    support = np.stack(counts, axis=1)
    return [
        LlmFeature(llm_id=llm_ids[j], kind="btl_cluster", values=values[j], support=support[j])
        for j in range(m)
    ]
