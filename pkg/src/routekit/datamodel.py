"""Core data types, dataset file IO, and reproducible splits.

File formats
------------
prompts   JSON-lines, one object per prompt: {"id": str, "embedding": [float, ...]}
labels    CSV, header "prompt_id,<llm_id_1>,...,<llm_id_M>"; cells are floats in
          [0, 1] or empty for a missing label
pool      CSV, header "llm_id,cost"
pairwise  CSV, header "prompt_id,llm_a,llm_b,outcome"; outcome is one of
          a_wins / b_wins / tie

Loaded matrices follow the prompts file's row order and the pool file's column
order. All randomness in this module flows through NumPy's PCG64 generator
(``np.random.default_rng``) seeded with a caller-supplied 64-bit seed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConsistencyError, ParseError, ValidationError

PAIRWISE_OUTCOMES = ("a_wins", "b_wins", "tie")

PROMPTS_FILENAME = "prompts.jsonl"
LABELS_FILENAME = "labels.csv"
POOL_FILENAME = "pool.csv"


@dataclass(frozen=True, eq=False)
class PromptRecord:
    """A prompt identity plus its fixed-dimension embedding."""

    id: str
    embedding: np.ndarray

    def __post_init__(self):
        emb = np.asarray(self.embedding, dtype=np.float64)
        if emb.ndim != 1:
            raise ValueError(f"embedding must be 1-D, got ndim={emb.ndim}")
        if not np.all(np.isfinite(emb)):
            raise ValidationError(f"prompt {self.id!r}: embedding has non-finite entries")
        object.__setattr__(self, "embedding", emb)

    def __eq__(self, other):
        if not isinstance(other, PromptRecord):
            return NotImplemented
        return self.id == other.id and np.array_equal(self.embedding, other.embedding)


@dataclass(frozen=True)
class LlmProfile:
    """An LLM identity plus its non-negative per-prompt cost."""

    id: str
    cost: float

    def __post_init__(self):
        cost = float(self.cost)
        if not math.isfinite(cost) or cost < 0:
            raise ValidationError(f"llm {self.id!r}: cost must be finite and >= 0, got {self.cost}")
        object.__setattr__(self, "cost", cost)


@dataclass(frozen=True, eq=False)
class LabelMatrix:
    """Per-prompt, per-LLM losses in [0, 1] with an observed-entry mask."""

    losses: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        losses = np.asarray(self.losses, dtype=np.float64)
        mask = np.asarray(self.mask, dtype=bool)
        if losses.ndim != 2 or mask.shape != losses.shape:
            raise ValueError(
                f"losses and mask must be matching 2-D arrays, got {losses.shape} and {mask.shape}"
            )
        seen = losses[mask]
        if seen.size and (not np.all(np.isfinite(seen)) or seen.min() < 0 or seen.max() > 1):
            raise ValidationError("observed losses must lie in [0, 1]")
        object.__setattr__(self, "losses", losses)
        object.__setattr__(self, "mask", mask)

    @property
    def n_prompts(self) -> int:
        return self.losses.shape[0]

    @property
    def n_llms(self) -> int:
        return self.losses.shape[1]

    def column(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        return self.losses[:, j], self.mask[:, j]

    def __eq__(self, other):
        if not isinstance(other, LabelMatrix):
            return NotImplemented
        if not np.array_equal(self.mask, other.mask):
            return False
        return np.array_equal(self.losses[self.mask], other.losses[other.mask])


@dataclass(frozen=True)
class PairwiseRecord:
    """One human comparison between two distinct LLMs on a prompt."""

    prompt_id: str
    llm_a: str
    llm_b: str
    outcome: str

    def __post_init__(self):
        if self.llm_a == self.llm_b:
            raise ValidationError(f"pairwise record on {self.prompt_id!r} compares an llm to itself")
        if self.outcome not in PAIRWISE_OUTCOMES:
            raise ValidationError(f"unknown outcome {self.outcome!r}")


@dataclass(frozen=True, eq=False)
class SplitSpec:
    """Disjoint prompt index sets plus disjoint train/test LLM index sets."""

    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    train_llms: np.ndarray
    test_llms: np.ndarray
    seed: int

    def __post_init__(self):
        for name in ("train_idx", "val_idx", "test_idx", "train_llms", "test_llms"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            object.__setattr__(self, name, arr)
        prompt_sets = [set(self.train_idx), set(self.val_idx), set(self.test_idx)]
        total = sum(len(s) for s in prompt_sets)
        if len(set().union(*prompt_sets)) != total:
            raise ValidationError("prompt index sets overlap")
        if set(self.train_llms) & set(self.test_llms):
            raise ValidationError("llm index sets overlap")

    def __eq__(self, other):
        if not isinstance(other, SplitSpec):
            return NotImplemented
        return self.seed == other.seed and all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("train_idx", "val_idx", "test_idx", "train_llms", "test_llms")
        )


def _float_cell(x: float) -> str:
    # repr round-trips exactly, which keeps save -> load an identity
    return repr(float(x))


def load_prompts(path) -> list[PromptRecord]:
    path = Path(path)
    records: list[PromptRecord] = []
    seen: set[str] = set()
    dim = -1
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path.name}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict) or "id" not in obj or "embedding" not in obj:
                raise ParseError(f"{path.name}:{lineno}: expected fields 'id' and 'embedding'")
            pid = obj["id"]
            if not isinstance(pid, str):
                raise ParseError(f"{path.name}:{lineno}: field 'id' must be a string")
            try:
                emb = np.asarray(obj["embedding"], dtype=np.float64)
            except (TypeError, ValueError) as exc:
                raise ParseError(f"{path.name}:{lineno}: field 'embedding' must be a list of numbers") from exc
            if emb.ndim != 1 or emb.size == 0:
                raise ParseError(f"{path.name}:{lineno}: field 'embedding' must be a non-empty flat list")
            if pid in seen:
                raise ConsistencyError(f"{path.name}:{lineno}: duplicate prompt id {pid!r}")
            if dim >= 0 and emb.size != dim:
                raise ConsistencyError(
                    f"{path.name}:{lineno}: embedding dimension {emb.size} != {dim} seen earlier"
                )
            dim = emb.size
            seen.add(pid)
            records.append(PromptRecord(id=pid, embedding=emb))
    return records


def load_pool(path) -> list[LlmProfile]:
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return []
    if rows[0] != ["llm_id", "cost"]:
        raise ParseError(f"{path.name}:1: expected header 'llm_id,cost'")
    pool: list[LlmProfile] = []
    seen: set[str] = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 2:
            raise ParseError(f"{path.name}:{lineno}: expected 2 fields, got {len(row)}")
        llm_id, cost_text = row
        if llm_id in seen:
            raise ConsistencyError(f"{path.name}:{lineno}: duplicate llm id {llm_id!r}")
        try:
            cost = float(cost_text)
        except ValueError as exc:
            raise ParseError(f"{path.name}:{lineno}: field 'cost' is not a number: {cost_text!r}") from exc
        seen.add(llm_id)
        pool.append(LlmProfile(id=llm_id, cost=cost))
    return pool


def load_labels(path, prompts: Sequence[PromptRecord], pool: Sequence[LlmProfile]) -> LabelMatrix:
    """Parse a labels CSV into a matrix aligned to ``prompts`` x ``pool``.

    Pool LLMs with no column and prompts with no row come back fully masked.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path.name}:1: empty labels file, expected a header row")
    header = rows[0]
    if not header or header[0] != "prompt_id":
        raise ParseError(f"{path.name}:1: first header field must be 'prompt_id'")
    pool_col = {p.id: j for j, p in enumerate(pool)}
    col_map: list[int] = []
    seen_cols: set[str] = set()
    for name in header[1:]:
        if name not in pool_col:
            raise ConsistencyError(f"{path.name}:1: labels column {name!r} is not in the pool")
        if name in seen_cols:
            raise ConsistencyError(f"{path.name}:1: duplicate labels column {name!r}")
        seen_cols.add(name)
        col_map.append(pool_col[name])

    prompt_row = {p.id: i for i, p in enumerate(prompts)}
    n, m = len(prompts), len(pool)
    losses = np.zeros((n, m), dtype=np.float64)
    mask = np.zeros((n, m), dtype=bool)
    seen_rows: set[str] = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"{path.name}:{lineno}: expected {len(header)} fields, got {len(row)}")
        pid = row[0]
        if pid not in prompt_row:
            raise ConsistencyError(f"{path.name}:{lineno}: unknown prompt id {pid!r}")
        if pid in seen_rows:
            raise ConsistencyError(f"{path.name}:{lineno}: duplicate row for prompt {pid!r}")
        seen_rows.add(pid)
        i = prompt_row[pid]
        for c, (cell, j) in enumerate(zip(row[1:], col_map), start=1):
            if cell == "":
                continue
            try:
                value = float(cell)
            except ValueError as exc:
                raise ParseError(
                    f"{path.name}:{lineno}: column {header[c]!r} is not a number: {cell!r}"
                ) from exc
            if not math.isfinite(value) or value < 0 or value > 1:
                raise ValidationError(
                    f"{path.name}:{lineno}: loss {value!r} outside [0, 1] for prompt {pid!r}"
                )
            losses[i, j] = value
            mask[i, j] = True
    return LabelMatrix(losses=losses, mask=mask)


def load_dataset(prompts_path, labels_path, pool_path):
    """Load and cross-validate the three core files.

    Returns (prompts, labels, pool) with labels aligned to the prompts file's
    row order and the pool file's column order.
    """
    prompts = load_prompts(prompts_path)
    pool = load_pool(pool_path)
    labels = load_labels(labels_path, prompts, pool)
    return prompts, labels, pool


def load_pairwise(path) -> list[PairwiseRecord]:
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return []
    if rows[0] != ["prompt_id", "llm_a", "llm_b", "outcome"]:
        raise ParseError(f"{path.name}:1: expected header 'prompt_id,llm_a,llm_b,outcome'")
    records: list[PairwiseRecord] = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 4:
            raise ParseError(f"{path.name}:{lineno}: expected 4 fields, got {len(row)}")
        pid, llm_a, llm_b, outcome = row
        if outcome not in PAIRWISE_OUTCOMES:
            raise ParseError(
                f"{path.name}:{lineno}: field 'outcome' must be one of {'/'.join(PAIRWISE_OUTCOMES)}, got {outcome!r}"
            )
        records.append(PairwiseRecord(prompt_id=pid, llm_a=llm_a, llm_b=llm_b, outcome=outcome))
    return records


def save_prompts(prompts: Sequence[PromptRecord], path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for rec in prompts:
            fh.write(json.dumps({"id": rec.id, "embedding": [float(v) for v in rec.embedding]}))
            fh.write("\n")


def save_pool(pool: Sequence[LlmProfile], path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["llm_id", "cost"])
        for p in pool:
            writer.writerow([p.id, _float_cell(p.cost)])


def save_labels(labels: LabelMatrix, prompts: Sequence[PromptRecord], pool: Sequence[LlmProfile], path) -> None:
    if labels.n_prompts != len(prompts) or labels.n_llms != len(pool):
        raise ValueError("label matrix shape does not match prompts/pool")
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["prompt_id"] + [p.id for p in pool])
        for i, rec in enumerate(prompts):
            row = [rec.id]
            for j in range(labels.n_llms):
                row.append(_float_cell(labels.losses[i, j]) if labels.mask[i, j] else "")
            writer.writerow(row)


def save_dataset(prompts, labels, pool, out_dir) -> dict[str, Path]:
    """Write the three core files into ``out_dir`` using the standard names."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "prompts": out / PROMPTS_FILENAME,
        "labels": out / LABELS_FILENAME,
        "pool": out / POOL_FILENAME,
    }
    save_prompts(prompts, paths["prompts"])
    save_labels(labels, prompts, pool, paths["labels"])
    save_pool(pool, paths["pool"])
    return paths


def make_split(
    n_prompts: int,
    n_llms: int,
    fractions: tuple[float, float, float],
    llm_train_fraction: float,
    seed: int,
) -> SplitSpec:
    """Draw a reproducible prompt/LLM split.

    Prompt subset sizes are floor(fraction * n_prompts); leftover prompts are
    dropped. The LLM test count is floor((1 - llm_train_fraction) * n_llms)
    and the remaining LLMs train. Both permutations come from one PCG64
    stream seeded with ``seed``, so equal arguments give equal splits.
    """
    if n_prompts < 3:
        raise ValueError(f"need at least 3 prompts to split, got {n_prompts}")
    if n_llms < 2:
        raise ValueError(f"need at least 2 llms to split, got {n_llms}")
    if len(fractions) != 3:
        raise ValueError("fractions must be (train, val, test)")
    if any(f < 0 or f > 1 for f in fractions):
        raise ValueError(f"fractions must lie in [0, 1], got {fractions}")
    if sum(fractions) > 1 + 1e-9:
        raise ValueError(f"fractions must sum to at most 1, got {fractions}")
    if not 0 < llm_train_fraction < 1:
        raise ValueError(f"llm_train_fraction must lie in (0, 1), got {llm_train_fraction}")

    rng = np.random.default_rng(seed)
    perm = rng.permutation(n_prompts)
    n_train = math.floor(fractions[0] * n_prompts)
    n_val = math.floor(fractions[1] * n_prompts)
    n_test = math.floor(fractions[2] * n_prompts)
    train_idx = np.sort(perm[:n_train])
    val_idx = np.sort(perm[n_train : n_train + n_val])
    test_idx = np.sort(perm[n_train + n_val : n_train + n_val + n_test])

    llm_perm = rng.permutation(n_llms)
    n_test_llms = math.floor((1.0 - llm_train_fraction) * n_llms)
    n_train_llms = n_llms - n_test_llms
    train_llms = np.sort(llm_perm[:n_train_llms])
    test_llms = np.sort(llm_perm[n_train_llms:])
    return SplitSpec(
        train_idx=train_idx,
        val_idx=val_idx,
        test_idx=test_idx,
        train_llms=train_llms,
        test_llms=test_llms,
        seed=seed,
    )


def restrict(labels: LabelMatrix, prompt_idx, llm_idx) -> LabelMatrix:
    """Submatrix selection; composes like ordinary fancy indexing."""
    prompt_idx = np.asarray(prompt_idx, dtype=np.int64).reshape(-1)
    llm_idx = np.asarray(llm_idx, dtype=np.int64).reshape(-1)
    n, m = labels.losses.shape
    if prompt_idx.size and (prompt_idx.min() < 0 or prompt_idx.max() >= n):
        raise ValueError(f"prompt indices out of range for {n} prompts")
    if llm_idx.size and (llm_idx.min() < 0 or llm_idx.max() >= m):
        raise ValueError(f"llm indices out of range for {m} llms")
    sel = np.ix_(prompt_idx, llm_idx)
    return LabelMatrix(losses=labels.losses[sel], mask=labels.mask[sel])
