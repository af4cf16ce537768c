"""Seeded k-means over prompt embeddings.

Lloyd iterations with D^2-weighted ("++") seeding. Fitting is deterministic
for a given (data, k, seed, restarts) tuple; restarts share one PCG64 stream
and the lowest-inertia run wins. Empty clusters are repaired by promoting the
point currently farthest from its assigned centroid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .datamodel import PromptRecord


@dataclass(frozen=True, eq=False)
class ClusterModel:
    """Fitted centroids plus the fit's bookkeeping."""

    centroids: np.ndarray
    k: int
    inertia: float
    seed: int

    def __post_init__(self):
        cents = np.ascontiguousarray(self.centroids, dtype=np.float64)
        if cents.ndim != 2 or cents.shape[0] != self.k:
            raise ValueError(f"centroids must be (k, d) with k={self.k}, got {cents.shape}")
        object.__setattr__(self, "centroids", cents)

    def __eq__(self, other):
        if not isinstance(other, ClusterModel):
            return NotImplemented
        return (
            self.k == other.k
            and self.seed == other.seed
            and self.inertia == other.inertia
            and np.array_equal(self.centroids, other.centroids)
        )

    def to_json(self) -> str:
        doc = {
            "k": self.k,
            "seed": self.seed,
            "inertia": float(self.inertia),
            "centroids": [[float(v) for v in row] for row in self.centroids],
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ClusterModel":
        doc = json.loads(text)
        return cls(
            centroids=np.asarray(doc["centroids"], dtype=np.float64),
            k=int(doc["k"]),
            inertia=float(doc["inertia"]),
            seed=int(doc["seed"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ClusterModel":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def _as_matrix(embeddings) -> np.ndarray:
    if isinstance(embeddings, np.ndarray):
        x = np.ascontiguousarray(embeddings, dtype=np.float64)
    else:
        x = np.ascontiguousarray([np.asarray(e, dtype=np.float64) for e in embeddings])
    if x.ndim != 2:
        raise ValueError(f"embeddings must form a 2-D array, got ndim={x.ndim}")
    if not np.all(np.isfinite(x)):
        raise ValueError("embeddings contain non-finite values")
    return x


def _plus_plus_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = x[first]
    if k == 1:
        return centers
    d2 = kernels.pairwise_sq_dists(x, centers[:1])[:, 0]
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            pick = int(rng.choice(n, p=d2 / total))
        else:
            pick = int(rng.integers(n))  # all remaining points coincide with a center
        centers[j] = x[pick]
        d2 = np.minimum(d2, kernels.pairwise_sq_dists(x, centers[j : j + 1])[:, 0])
    return centers


def _assign_and_repair(x: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    idx, d2 = kernels.nearest_centroid(x, centroids)
    k = centroids.shape[0]
    counts = np.bincount(idx, minlength=k)
    for j in np.flatnonzero(counts == 0):
        far = int(np.argmax(d2))
        counts[idx[far]] -= 1
        centroids[j] = x[far]
        idx[far] = j
        d2[far] = 0.0
        counts[j] = 1
    return idx, d2


def _means(x: np.ndarray, idx: np.ndarray, k: int) -> np.ndarray:
    out = np.empty((k, x.shape[1]), dtype=np.float64)
    for j in range(k):
        members = x[idx == j]
        out[j] = members.mean(axis=0)
    return out


def _lloyd(
    x: np.ndarray, centroids: np.ndarray, max_iter: int, rel_tol: float
) -> tuple[np.ndarray, float]:
    idx, d2 = _assign_and_repair(x, centroids)
    inertia = float(d2.sum())
    for _ in range(max_iter):
        centroids = _means(x, idx, centroids.shape[0])
        idx, d2 = _assign_and_repair(x, centroids)
        new_inertia = float(d2.sum())
        assert new_inertia <= inertia * (1 + 1e-12) + 1e-12, "inertia increased"
        improvement = 0.0 if inertia == 0 else (inertia - new_inertia) / inertia
        done = new_inertia == inertia or improvement < rel_tol
        inertia = new_inertia
        if done:
            break
    return centroids, inertia


def fit_kmeans(
    embeddings,
    k: int,
    seed: int,
    max_iter: int = 100,
    rel_tol: float = 1e-6,
    n_restarts: int = 1,
) -> ClusterModel:
    """Fit k centroids; of ``n_restarts`` runs the lowest-inertia one wins."""
    x = _as_matrix(embeddings)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if x.shape[0] < k:
        raise ValueError(f"need at least k={k} points, got {x.shape[0]}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")
    if rel_tol < 0:
        raise ValueError(f"rel_tol must be >= 0, got {rel_tol}")
    if n_restarts < 1:
        raise ValueError(f"n_restarts must be >= 1, got {n_restarts}")

    rng = np.random.default_rng(seed)
    best_centroids: np.ndarray | None = None
    best_inertia = np.inf
    for _ in range(n_restarts):
        init = _plus_plus_init(x, k, rng)
        centroids, inertia = _lloyd(x, init, max_iter, rel_tol)
        if inertia < best_inertia:
            best_inertia = inertia
            best_centroids = centroids
    assert best_centroids is not None
    return ClusterModel(centroids=best_centroids, k=k, inertia=best_inertia, seed=seed)


def assign(model: ClusterModel, embedding) -> int:
    """Index of the nearest centroid; exact ties go to the lowest index."""
    x = np.asarray(embedding, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"embedding must be 1-D, got ndim={x.ndim}")
    if x.shape[0] != model.centroids.shape[1]:
        raise ValueError(
            f"embedding dim {x.shape[0]} != centroid dim {model.centroids.shape[1]}"
        )
    idx, _ = kernels.nearest_centroid(x[None, :], model.centroids)
    return int(idx[0])


def assign_all(model: ClusterModel, prompts) -> np.ndarray:
    """Vectorized ``assign`` over PromptRecords or an (n, d) array."""
    if isinstance(prompts, np.ndarray):
        x = _as_matrix(prompts) if prompts.size else prompts.reshape(0, model.centroids.shape[1])
    else:
        prompts = list(prompts)
        if not prompts:
            return np.empty(0, dtype=np.int64)
        if isinstance(prompts[0], PromptRecord):
            x = np.stack([p.embedding for p in prompts])
        else:
            x = _as_matrix(prompts)
    if x.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    if x.shape[1] != model.centroids.shape[1]:
        raise ValueError(
            f"embedding dim {x.shape[1]} != centroid dim {model.centroids.shape[1]}"
        )
    idx, _ = kernels.nearest_centroid(x, model.centroids)
    return idx


def embeddings_of(prompts: Sequence[PromptRecord]) -> np.ndarray:
    """Stack prompt embeddings into an (n, d) array."""
    if not prompts:
        raise ValueError("no prompts given")
    return np.stack([p.embedding for p in prompts])
