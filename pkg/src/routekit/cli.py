"""Command-line interface.

One executable, nine subcommands: synth, validate, cluster, embed-llm,
route, sweep, tune, report, compare. Exit codes: 0 on success, 1 when input
data fails to load or validate, 2 on usage errors. Data failures print one
machine-readable JSON object to stderr. All randomness comes from explicit
seeds, every referenced input path is checked before any work starts, and
outputs are written atomically, so a failed run never leaves partial files
and a repeated run reproduces its outputs byte for byte.

Floats fabricated by the CLI (scores, curves, metrics) are printed with 9
significant digits; model and feature documents keep full precision.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import ClusterModel, assign_all, embeddings_of, fit_kmeans
from .datamodel import (
    PromptRecord,
    load_dataset,
    load_labels,
    load_pairwise,
    load_pool,
    load_prompts,
    restrict,
    save_dataset,
)
from .errors import ConsistencyError, InsufficientDataError, RoutekitError
from .evaluation import (
    DeferralCurve,
    default_candidate_grid,
    default_lambda_grid,
    metrics,
    peak_single_quality,
    score_candidates,
    sign_test,
    sweep,
)
from .learned_map import LearnedMapEstimator, MapParams, TrainConfig, train_map
from .llm_features import (
    LlmFeature,
    btl_cluster_scores,
    cluster_error_vector,
    raw_error_vector,
)
from .routing import ClusterEstimator, KnnEstimator, route
from .synth_bench import MixtureSpec, generate, reseed


def _sig9(x: float) -> float:
    return float(format(float(x), ".9g"))


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _require_files(*paths) -> None:
    missing = [str(p) for p in paths if p is not None and not Path(p).is_file()]
    if missing:
        raise FileNotFoundError(f"missing input file(s): {', '.join(missing)}")


def _emit(obj: dict, out: str | None) -> None:
    text = json.dumps(obj, indent=2) + "\n"
    if out:
        _atomic_write(Path(out), text)
    else:
        sys.stdout.write(text)


def _load_features(features_dir) -> list[LlmFeature]:
    d = Path(features_dir)
    if not d.is_dir():
        raise FileNotFoundError(f"features directory not found: {d}")
    paths = sorted(d.glob("*.json"))
    if not paths:
        raise InsufficientDataError(f"no feature documents (*.json) in {d}")
    return [LlmFeature.load(p) for p in paths]


def _feature_pool(features: list[LlmFeature], pool_profiles):
    """Order features by the pool file and pair them with costs."""
    by_id = {f.llm_id: f for f in features}
    if len(by_id) != len(features):
        raise ConsistencyError("duplicate llm ids among feature documents")
    cost_by_id = {p.id: p.cost for p in pool_profiles}
    unknown = sorted(set(by_id) - set(cost_by_id))
    if unknown:
        raise ConsistencyError(f"feature llm ids missing from the pool file: {', '.join(unknown)}")
    ordered = [p.id for p in pool_profiles if p.id in by_id]
    return [(by_id[i], cost_by_id[i]) for i in ordered], ordered


def _build_estimator(args):
    if args.router == "cluster":
        _require_files(args.model)
        return ClusterEstimator(ClusterModel.load(args.model))
    if args.router == "learned":
        _require_files(args.map)
        return LearnedMapEstimator(MapParams.load(args.map))
    _require_files(args.knn_ref)
    ref = embeddings_of(load_prompts(args.knn_ref))
    return KnnEstimator(ref, args.k_neighbors)


def _parse_lambdas(text: str | None, costs) -> np.ndarray:
    if text is None:
        return default_lambda_grid(costs)
    values = sorted({float(tok) for tok in text.split(",") if tok.strip() != ""})
    if not values:
        raise ValueError("empty lambda list")
    return np.asarray(values, dtype=np.float64)


def cmd_synth(args) -> int:
    _require_files(args.spec)
    spec = MixtureSpec.load(args.spec)
    if args.seed is not None:
        spec = reseed(spec, args.seed)
    prompts, labels, pool, components = generate(spec, args.n)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = save_dataset(prompts, labels, pool, out)
    comp_lines = ["prompt_id,component"]
    comp_lines += [f"{p.id},{int(z)}" for p, z in zip(prompts, components)]
    comp_path = out / "components.csv"
    _atomic_write(comp_path, "\n".join(comp_lines) + "\n")
    _emit(
        {
            "n_prompts": len(prompts),
            "n_llms": len(pool),
            "files": [str(paths["prompts"]), str(paths["labels"]), str(paths["pool"]), str(comp_path)],
        },
        None,
    )
    return 0


def cmd_validate(args) -> int:
    _require_files(args.prompts, args.labels, args.pool, args.pairwise)
    prompts, labels, pool = load_dataset(args.prompts, args.labels, args.pool)
    summary = {
        "n_prompts": len(prompts),
        "embedding_dim": int(prompts[0].embedding.size) if prompts else 0,
        "n_llms": len(pool),
        "observed_fraction": _sig9(labels.mask.mean()) if labels.mask.size else 0.0,
    }
    if args.pairwise:
        records = load_pairwise(args.pairwise)
        known = {p.id for p in prompts}
        llm_ids = {p.id for p in pool}
        for rec in records:
            if rec.prompt_id not in known:
                raise ConsistencyError(f"pairwise prompt id {rec.prompt_id!r} not in prompts file")
            for llm in (rec.llm_a, rec.llm_b):
                if llm not in llm_ids:
                    raise ConsistencyError(f"pairwise llm id {llm!r} not in pool file")
        summary["n_pairwise"] = len(records)
    _emit(summary, None)
    return 0


def cmd_cluster(args) -> int:
    _require_files(args.prompts)
    prompts = load_prompts(args.prompts)
    if not prompts:
        raise InsufficientDataError("prompts file is empty")
    model = fit_kmeans(
        embeddings_of(prompts),
        args.k,
        seed=args.seed,
        max_iter=args.max_iter,
        rel_tol=args.rel_tol,
        n_restarts=args.restarts,
    )
    _atomic_write(Path(args.out), model.to_json() + "\n")
    _emit({"k": model.k, "inertia": _sig9(model.inertia), "out": str(args.out)}, None)
    return 0


def cmd_embed_llm(args) -> int:
    _require_files(args.prompts, args.pool)
    pool = load_pool(args.pool)
    pool_ids = [p.id for p in pool]
    targets = args.llm if args.llm else pool_ids
    unknown = sorted(set(targets) - set(pool_ids))
    if unknown:
        raise ConsistencyError(f"requested llm ids not in the pool: {', '.join(unknown)}")

    if args.kind == "btl_cluster":
        _require_files(args.pairwise, args.model)
        prompts = load_prompts(args.prompts)
        model = ClusterModel.load(args.model)
        assignments = dict(zip((p.id for p in prompts), assign_all(model, prompts).tolist()))
        records = load_pairwise(args.pairwise)
        features = btl_cluster_scores(
            records, assignments, pool_ids, model.k, pseudo_count=args.pseudo_count
        )
        features = [f for f in features if f.llm_id in set(targets)]
    else:
        _require_files(args.labels)
        if args.kind == "cluster_error":
            _require_files(args.model)
            model = ClusterModel.load(args.model)
        prompts, labels, _ = load_dataset(args.prompts, args.labels, args.pool)
        features = []
        for llm_id in targets:
            j = pool_ids.index(llm_id)
            losses, mask = labels.column(j)
            if args.kind == "raw_error":
                features.append(raw_error_vector(losses, mask, llm_id))
            else:
                assignments = assign_all(model, prompts)
                features.append(cluster_error_vector(losses, mask, assignments, model.k, llm_id))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for feature in features:
        path = out / f"{feature.llm_id}.json"
        _atomic_write(path, feature.to_json() + "\n")
        written.append(str(path))
    _emit({"kind": args.kind, "written": written}, None)
    return 0


def cmd_route(args) -> int:
    _require_files(args.prompts, args.pool)
    if args.lam < 0:
        raise ValueError(f"lambda must be >= 0, got {args.lam}")
    prompts = load_prompts(args.prompts)
    pool_profiles = load_pool(args.pool)
    features = _load_features(args.features)
    pool, ordered_ids = _feature_pool(features, pool_profiles)
    estimator = _build_estimator(args)
    lines = []
    for rec in prompts:
        decision = route(estimator, rec.embedding, pool, args.lam)
        scores = [_sig9(s) for s in decision.adjusted_scores]
        lines.append(
            json.dumps(
                {
                    "llm_index": int(decision.llm_index),
                    "llm_id": ordered_ids[decision.llm_index],
                    "lambda": _sig9(decision.lam),
                    "adjusted_scores": scores,
                }
            )
        )
    text = "\n".join(lines) + "\n"
    if args.out:
        _atomic_write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_sweep(args) -> int:
    _require_files(args.prompts, args.labels, args.pool)
    prompts, labels, pool_profiles = load_dataset(args.prompts, args.labels, args.pool)
    features = _load_features(args.features)
    pool, ordered_ids = _feature_pool(features, pool_profiles)
    col_of = {p.id: j for j, p in enumerate(pool_profiles)}
    labels = restrict(labels, np.arange(labels.n_prompts), [col_of[i] for i in ordered_ids])
    estimator = _build_estimator(args)
    lambdas = _parse_lambdas(args.lambdas, [c for _, c in pool])
    curve = sweep(estimator, embeddings_of(prompts), labels, pool, lambdas)
    _atomic_write(Path(args.out), curve.to_csv())
    _emit(
        {
            "points": int(curve.lambdas.size),
            "skipped_prompts": curve.n_skipped,
            "normalization": _sig9(curve.normalization),
            "out": str(args.out),
        },
        None,
    )
    return 0


def cmd_tune(args) -> int:
    _require_files(args.train_prompts, args.train_labels, args.val_prompts, args.val_labels, args.pool)
    train_prompts, train_labels, pool = load_dataset(args.train_prompts, args.train_labels, args.pool)
    val_prompts, val_labels, _ = load_dataset(args.val_prompts, args.val_labels, args.pool)
    costs = [p.cost for p in pool]
    kind = {"knn": "knn", "kmeans": "kmeans_cluster", "learned": "learned_map"}[args.router]
    if args.candidates:
        candidates = sorted({int(tok) for tok in args.candidates.split(",") if tok.strip()})
    else:
        candidates = default_candidate_grid(kind, len(val_prompts))

    def build_learned(model, feats, k):
        params = train_map(
            embeddings_of(train_prompts),
            train_labels,
            feats,
            k,
            arch=args.arch,
            config=TrainConfig(seed=args.seed),
        )
        return LearnedMapEstimator(params)

    scores = score_candidates(
        candidates,
        embeddings_of(train_prompts),
        train_labels,
        embeddings_of(val_prompts),
        val_labels,
        costs,
        kind,
        seed=args.seed,
        build_learned=build_learned,
    )
    best_k, best_area = scores[0]
    for cand, area in scores[1:]:
        if area > best_area or (area == best_area and cand < best_k):
            best_k, best_area = cand, area
    lines = ["k,area"]
    lines += [f"{cand},{format(area, '.9g')}" for cand, area in scores]
    lines.append(f"chosen,{best_k}")
    text = "\n".join(lines) + "\n"
    if args.out:
        _atomic_write(Path(args.out), text)
    sys.stdout.write(text)
    return 0


def cmd_report(args) -> int:
    _require_files(args.curve, args.labels, args.pool)
    curve = DeferralCurve.load_csv(args.curve)
    pool = load_pool(args.pool)
    # The labels file stands alone here (no embeddings needed), so prompt
    # records are synthesized from its own rows before the shared loader runs.
    with Path(args.labels).open("r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise RoutekitError(f"{Path(args.labels).name}: empty labels file")
    pool_ids = [p.id for p in pool]
    targets = args.llm if args.llm else [i for i in pool_ids if i in set(rows[0][1:])]
    unknown = sorted(set(targets) - set(rows[0][1:]))
    if unknown:
        raise ConsistencyError(f"llm ids not in the labels file: {', '.join(unknown)}")
    stub_prompts = [PromptRecord(id=r[0], embedding=np.zeros(1)) for r in rows[1:] if r]
    labels = load_labels(args.labels, stub_prompts, pool)
    col_of = {p.id: j for j, p in enumerate(pool)}
    sub = restrict(labels, np.arange(labels.n_prompts), [col_of[i] for i in targets])
    peak = peak_single_quality(sub)
    result = metrics(curve, peak)
    _emit(
        {
            "area": _sig9(result.area),
            "area_50": _sig9(result.area_50),
            "qnc": "inf" if math.isinf(result.qnc) else _sig9(result.qnc),
            "peak_quality": _sig9(peak),
        },
        args.out,
    )
    return 0


def cmd_compare(args) -> int:
    _require_files(args.csv)
    with Path(args.csv).open("r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise RoutekitError(f"{Path(args.csv).name}: empty csv")
    header = rows[0]
    for col in (args.col_a, args.col_b):
        if col not in header:
            raise ConsistencyError(f"column {col!r} not in {Path(args.csv).name}")
    ia, ib = header.index(args.col_a), header.index(args.col_b)
    pairs = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            pairs.append((float(row[ia]), float(row[ib])))
        except (ValueError, IndexError) as exc:
            raise RoutekitError(f"{Path(args.csv).name}:{lineno}: bad metric value") from exc
    p_value = sign_test(pairs)
    wins_a = sum(1 for a, b in pairs if a > b)
    wins_b = sum(1 for a, b in pairs if a < b)
    _emit(
        {
            "n_pairs": len(pairs),
            "wins_a": wins_a,
            "wins_b": wins_b,
            "ties": len(pairs) - wins_a - wins_b,
            "p_value": _sig9(p_value),
        },
        None,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="routekit",
        description="Cost-aware routing of prompts across dynamic pools of LLMs.",
    )
    parser.add_argument("--version", action="version", version=f"routekit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="draw a synthetic mixture dataset into standard files")
    p.add_argument("--spec", required=True, help="mixture spec JSON")
    p.add_argument("--n", type=int, required=True, help="number of prompts to draw")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the spec's seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("validate", help="load and cross-check dataset files")
    p.add_argument("--prompts", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--pool", required=True)
    p.add_argument("--pairwise", default=None)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("cluster", help="fit k-means over prompt embeddings")
    p.add_argument("--prompts", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--rel-tol", type=float, default=1e-6)
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--out", required=True, help="cluster model JSON path")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("embed-llm", help="compute LLM feature documents")
    p.add_argument("--kind", choices=("raw_error", "cluster_error", "btl_cluster"), required=True)
    p.add_argument("--prompts", required=True, help="validation prompts JSONL")
    p.add_argument("--labels", default=None, help="validation labels CSV (loss kinds)")
    p.add_argument("--pool", required=True)
    p.add_argument("--model", default=None, help="cluster model JSON (cluster kinds)")
    p.add_argument("--pairwise", default=None, help="pairwise comparisons CSV (btl_cluster)")
    p.add_argument("--pseudo-count", type=float, default=0.1)
    p.add_argument("--llm", action="append", default=None, help="llm id to embed (repeatable; default all)")
    p.add_argument("--out", required=True, help="output directory for <llm_id>.json")
    p.set_defaults(func=cmd_embed_llm)

    def routing_flags(p):
        p.add_argument("--router", choices=("cluster", "knn", "learned"), required=True)
        p.add_argument("--model", default=None, help="cluster model JSON (router=cluster)")
        p.add_argument("--map", default=None, help="learned map JSON (router=learned)")
        p.add_argument("--knn-ref", default=None, help="reference prompts JSONL (router=knn)")
        p.add_argument("--k-neighbors", type=int, default=None)
        p.add_argument("--features", required=True, help="directory of LLM feature documents")
        p.add_argument("--prompts", required=True)
        p.add_argument("--pool", required=True)

    p = sub.add_parser("route", help="route prompts at one lambda")
    routing_flags(p)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--out", default=None, help="decisions JSONL (default stdout)")
    p.set_defaults(func=cmd_route)

    p = sub.add_parser("sweep", help="trace a deferral curve over a lambda grid")
    routing_flags(p)
    p.add_argument("--labels", required=True)
    p.add_argument("--lambdas", default=None, help="comma-separated grid (default: built-in)")
    p.add_argument("--out", required=True, help="curve CSV path")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("tune", help="pick a cluster/neighbor count on the validation split")
    p.add_argument("--router", choices=("knn", "kmeans", "learned"), required=True)
    p.add_argument("--train-prompts", required=True)
    p.add_argument("--train-labels", required=True)
    p.add_argument("--val-prompts", required=True)
    p.add_argument("--val-labels", required=True)
    p.add_argument("--pool", required=True)
    p.add_argument("--candidates", default=None, help="comma-separated counts (default: built-in grid)")
    p.add_argument("--arch", choices=("linear_softmax", "two_hidden"), default="linear_softmax")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="also write the CSV here")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("report", help="summarize a deferral curve CSV")
    p.add_argument("--curve", required=True)
    p.add_argument("--labels", required=True, help="test labels CSV for the peak-quality reference")
    p.add_argument("--pool", required=True)
    p.add_argument("--llm", action="append", default=None, help="restrict the peak to these llm ids")
    p.add_argument("--out", default=None, help="metrics JSON (default stdout)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("compare", help="sign test between two metric columns of a CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--col-a", required=True)
    p.add_argument("--col-b", required=True)
    p.set_defaults(func=cmd_compare)
    return parser


# flags a mode makes mandatory even though argparse sees them as optional
_MODE_FLAGS = {
    "router": {
        "cluster": [("--model", "model")],
        "learned": [("--map", "map")],
        "knn": [("--knn-ref", "knn_ref"), ("--k-neighbors", "k_neighbors")],
    },
    "kind": {
        "raw_error": [("--labels", "labels")],
        "cluster_error": [("--labels", "labels"), ("--model", "model")],
        "btl_cluster": [("--model", "model"), ("--pairwise", "pairwise")],
    },
}


def _missing_mode_flags(args) -> str:
    for selector, modes in _MODE_FLAGS.items():
        mode = getattr(args, selector, None)
        if mode not in modes:
            continue
        needed = [flag for flag, attr in modes[mode] if hasattr(args, attr)]
        missing = [
            flag for flag, attr in modes[mode] if hasattr(args, attr) and getattr(args, attr) is None
        ]
        if needed and missing:
            return f"{', '.join(missing)} required with --{selector} {mode}"
    return ""


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    missing = _missing_mode_flags(args)
    if missing:
        _fail(ValueError(missing))
        return 2
    try:
        return args.func(args)
    except (RoutekitError, OSError, ValueError, TypeError, KeyError, np.linalg.LinAlgError, json.JSONDecodeError) as exc:
        _fail(exc)
        return 1


def _fail(exc: BaseException) -> None:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")


if __name__ == "__main__":
    sys.exit(main())
