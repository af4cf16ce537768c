"""Soft cluster assignment learned end-to-end from routing labels.

A small softmax network maps a prompt embedding to a distribution over the
k clusters; an LLM's estimated loss is that distribution dotted with the
LLM's per-cluster error vector, which stays frozen during training. Training
minimizes the log loss of those estimates against observed 0/1 labels, with
the estimate clamped away from {0, 1} so the objective stays finite.

Architectures: "linear_softmax" (one dense layer) and "two_hidden" (frozen
per-feature standardization, then two width-128 rectified dense layers).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .datamodel import LabelMatrix
from .errors import TrainingError
from .llm_features import LlmFeature
from .routing import LossEstimator

ARCHITECTURES = ("linear_softmax", "two_hidden")
HIDDEN_WIDTH = 128


@dataclass(frozen=True, eq=False)
class MapParams:
    """Network weights plus the frozen standardization statistics."""

    arch: str
    layers: tuple[tuple[np.ndarray, np.ndarray], ...]
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    seed: int

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ValueError(f"unknown arch {self.arch!r}")
        layers = tuple(
            (np.asarray(w, dtype=np.float64), np.asarray(b, dtype=np.float64))
            for w, b in self.layers
        )
        expected = 1 if self.arch == "linear_softmax" else 3
        if len(layers) != expected:
            raise ValueError(f"arch {self.arch!r} needs {expected} layers, got {len(layers)}")
        for w, b in layers:
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError("each layer needs weights (d_in, d_out) and bias (d_out,)")
        mean = np.asarray(self.feature_mean, dtype=np.float64)
        scale = np.asarray(self.feature_scale, dtype=np.float64)
        if mean.shape != (layers[0][0].shape[0],) or scale.shape != mean.shape:
            raise ValueError("standardization vectors must match the input dimension")
        if np.any(scale <= 0):
            raise ValueError("feature_scale entries must be positive")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "feature_mean", mean)
        object.__setattr__(self, "feature_scale", scale)

    @property
    def n_clusters(self) -> int:
        return self.layers[-1][0].shape[1]

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[0]

    def __eq__(self, other):
        if not isinstance(other, MapParams):
            return NotImplemented
        if self.arch != other.arch or self.seed != other.seed or len(self.layers) != len(other.layers):
            return False
        if not (
            np.array_equal(self.feature_mean, other.feature_mean)
            and np.array_equal(self.feature_scale, other.feature_scale)
        ):
            return False
        return all(
            np.array_equal(w1, w2) and np.array_equal(b1, b2)
            for (w1, b1), (w2, b2) in zip(self.layers, other.layers)
        )

    def to_json(self) -> str:
        doc = {
            "arch": self.arch,
            "seed": self.seed,
            "feature_mean": [float(v) for v in self.feature_mean],
            "feature_scale": [float(v) for v in self.feature_scale],
            "layers": [
                {
                    "shape": list(w.shape),
                    "weights": [float(v) for v in w.reshape(-1)],  # row-major
                    "bias": [float(v) for v in b],
                }
                for w, b in self.layers
            ],
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "MapParams":
        doc = json.loads(text)
        layers = tuple(
            (
                np.asarray(layer["weights"], dtype=np.float64).reshape(layer["shape"]),
                np.asarray(layer["bias"], dtype=np.float64),
            )
            for layer in doc["layers"]
        )
        return cls(
            arch=str(doc["arch"]),
            layers=layers,
            feature_mean=np.asarray(doc["feature_mean"], dtype=np.float64),
            feature_scale=np.asarray(doc["feature_scale"], dtype=np.float64),
            seed=int(doc["seed"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "MapParams":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    batch_size: int = 64
    learning_rate: float = 0.005
    optimizer: str = "adam"
    clamp_eps: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be adam or sgd, got {self.optimizer!r}")
        if not 0 < self.clamp_eps < 0.5:
            raise ValueError(f"clamp_eps must lie in (0, 0.5), got {self.clamp_eps}")


def _forward(params: MapParams, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    z = (x - params.feature_mean) / params.feature_scale
    acts = [z]
    for w, b in params.layers[:-1]:
        z = np.maximum(z @ w + b, 0.0)
        acts.append(z)
    w, b = params.layers[-1]
    logits = z @ w + b
    logits = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    probs = e / e.sum(axis=1, keepdims=True)
    return probs, acts


def soft_assign(params: MapParams, embedding) -> np.ndarray:
    """Distribution over clusters for one embedding (sums to 1)."""
    x = np.asarray(embedding, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"embedding must be 1-D, got ndim={x.ndim}")
    if x.shape[0] != params.input_dim:
        raise ValueError(f"embedding dim {x.shape[0]} != expected {params.input_dim}")
    probs, _ = _forward(params, x[None, :])
    return probs[0]


def soft_assign_batch(params: MapParams, embeddings) -> np.ndarray:
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ValueError("embeddings must be (n, d) matching the map's input dim")
    probs, _ = _forward(params, x)
    return probs


def _stack_features(features: Sequence[LlmFeature], k: int) -> np.ndarray:
    table = []
    for f in features:
        if f.kind not in ("cluster_error", "btl_cluster"):
            raise ValueError(f"feature kind {f.kind!r} is not cluster-shaped")
        if len(f) != k:
            raise ValueError(f"feature length {len(f)} != k={k}")
        table.append(f.values)
    return np.stack(table)


def loss_and_grad(
    params: MapParams,
    embeddings,
    losses,
    observed,
    features: Sequence[LlmFeature],
    clamp_eps: float = 1e-6,
):
    """Mean clamped log loss over observed (prompt, LLM) pairs and its gradient.

    Returns (loss, grads) with grads shaped like ``params.layers``. The
    gradient is exact for the clamped objective: estimates pinned at the
    clamp boundary contribute zero.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(losses, dtype=np.float64)
    obs = np.asarray(observed, dtype=bool)
    if x.ndim != 2 or y.ndim != 2 or y.shape[0] != x.shape[0] or obs.shape != y.shape:
        raise ValueError("need embeddings (n, d), losses (n, m), observed (n, m)")
    if not 0 < clamp_eps < 0.5:
        raise ValueError(f"clamp_eps must lie in (0, 0.5), got {clamp_eps}")
    psi = _stack_features(features, params.n_clusters)  # (m, k)
    if psi.shape[0] != y.shape[1]:
        raise ValueError("feature count does not match the label matrix width")
    n_obs = int(obs.sum())
    if n_obs == 0:
        raise ValueError("no observed labels in the batch")

    probs, acts = _forward(params, x)  # (n, k)
    raw = probs @ psi.T  # (n, m)
    est = np.clip(raw, clamp_eps, 1.0 - clamp_eps)
    point = -(y * np.log(est) + (1.0 - y) * np.log1p(-est))
    loss = float((point * obs).sum() / n_obs)

    d_est = np.where(obs, (-(y / est) + (1.0 - y) / (1.0 - est)) / n_obs, 0.0)
    inside = (raw >= clamp_eps) & (raw <= 1.0 - clamp_eps)
    d_raw = np.where(inside, d_est, 0.0)
    d_probs = d_raw @ psi  # (n, k)
    delta = probs * (d_probs - (d_probs * probs).sum(axis=1, keepdims=True))

    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(params.layers)  # type: ignore[list-item]
    for li in range(len(params.layers) - 1, -1, -1):
        w, _ = params.layers[li]
        grads[li] = (acts[li].T @ delta, delta.sum(axis=0))
        if li > 0:
            delta = (delta @ w.T) * (acts[li] > 0)
    return loss, grads


def _init_params(
    arch: str,
    input_dim: int,
    k: int,
    rng: np.random.Generator,
    feature_mean: np.ndarray,
    feature_scale: np.ndarray,
    seed: int,
) -> MapParams:
    def dense(d_in: int, d_out: int) -> tuple[np.ndarray, np.ndarray]:
        bound = np.sqrt(6.0 / (d_in + d_out))
        w = rng.uniform(-bound, bound, size=(d_in, d_out))
        return w, np.zeros(d_out)

    if arch == "linear_softmax":
        layers = (dense(input_dim, k),)
    else:
        layers = (
            dense(input_dim, HIDDEN_WIDTH),
            dense(HIDDEN_WIDTH, HIDDEN_WIDTH),
            dense(HIDDEN_WIDTH, k),
        )
    return MapParams(
        arch=arch,
        layers=layers,
        feature_mean=feature_mean,
        feature_scale=feature_scale,
        seed=seed,
    )


class _Adam:
    def __init__(self, shapes, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, tensors, grads):
        self.t += 1
        scale = self.lr * np.sqrt(1.0 - self.beta2**self.t) / (1.0 - self.beta1**self.t)
        for i, (tensor, grad) in enumerate(zip(tensors, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad * grad
            tensor -= scale * self.m[i] / (np.sqrt(self.v[i]) + self.eps)


class _Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, tensors, grads):
        for tensor, grad in zip(tensors, grads):
            tensor -= self.lr * grad


def train_map(
    embeddings,
    labels: LabelMatrix,
    features: Sequence[LlmFeature],
    k: int,
    arch: str = "linear_softmax",
    config: TrainConfig = TrainConfig(),
    epoch_losses: list | None = None,
) -> MapParams:
    """Mini-batch training of the cluster map against frozen LLM features.

    Shuffling and initialization draw from one generator seeded with
    ``config.seed``, so retraining with equal inputs is bit-identical. If
    ``epoch_losses`` is given it receives the full-data loss after each
    epoch. Raises TrainingError if the loss stops being finite.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    y = labels.losses
    obs = labels.mask
    if arch not in ARCHITECTURES:
        raise ValueError(f"unknown arch {arch!r}")
    if x.ndim != 2 or y.shape != (x.shape[0], len(features)) or obs.shape != y.shape:
        raise ValueError("embeddings, labels, and features disagree on shapes")
    _stack_features(features, k)

    rng = np.random.default_rng(config.seed)
    if arch == "two_hidden":
        mean = x.mean(axis=0)
        scale = x.std(axis=0)
        scale[scale == 0] = 1.0
    else:
        mean = np.zeros(x.shape[1])
        scale = np.ones(x.shape[1])
    params = _init_params(arch, x.shape[1], k, rng, mean, scale, config.seed)

    tensors: list[np.ndarray] = []
    for w, b in params.layers:
        tensors.extend([w, b])
    optimizer = (
        _Adam([t.shape for t in tensors], config.learning_rate)
        if config.optimizer == "adam"
        else _Sgd(config.learning_rate)
    )

    def full_loss() -> float:
        loss, _ = loss_and_grad(params, x, y, obs, features, config.clamp_eps)
        return loss

    initial_loss = full_loss()
    n = x.shape[0]
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            if not obs[batch].any():
                continue  # nothing observed in this batch
            loss, grads = loss_and_grad(
                params, x[batch], y[batch], obs[batch], features, config.clamp_eps
            )
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {start // config.batch_size}"
                )
            flat = []
            for dw, db in grads:
                flat.extend([dw, db])
            optimizer.step(tensors, flat)
        if epoch_losses is not None:
            epoch_losses.append(full_loss())

    final_loss = full_loss()
    assert final_loss <= initial_loss or np.isclose(final_loss, initial_loss), (
        "training made the fit worse; lower the learning rate"
    )
    return params


class LearnedMapEstimator(LossEstimator):
    """Soft cluster weights dotted with an LLM's per-cluster errors."""

    kind = "learned_map"

    def __init__(self, params: MapParams):
        self.params = params

    def _check(self, feature: LlmFeature) -> None:
        if not isinstance(feature, LlmFeature):
            raise TypeError("learned-map estimator needs an LlmFeature per pool entry")
        if feature.kind not in ("cluster_error", "btl_cluster"):
            raise ValueError(f"feature kind {feature.kind!r} is not cluster-shaped")
        if len(feature) != self.params.n_clusters:
            raise ValueError(
                f"feature length {len(feature)} != k={self.params.n_clusters}"
            )

    def estimate(self, x, llm) -> float:
        self._check(llm)
        weights = soft_assign(self.params, np.asarray(x, dtype=np.float64))
        return float(weights @ llm.values)

    def estimate_matrix(self, embeddings, llms) -> np.ndarray:
        for llm in llms:
            self._check(llm)
        probs = soft_assign_batch(self.params, embeddings)
        table = np.stack([llm.values for llm in llms])
        return probs @ table.T

    def describe(self) -> dict:
        return {"kind": self.kind, "arch": self.params.arch, "k": self.params.n_clusters}


def learned_estimator(params: MapParams, feature: LlmFeature) -> LearnedMapEstimator:
    """Estimator for pools of per-cluster features shaped like ``feature``."""
    est = LearnedMapEstimator(params)
    est._check(feature)
    return est
