"""routekit: cost-aware routing of prompts across dynamic pools of LLMs.

Represent each LLM by how it fails on held-out prompts, estimate each
prompt's loss under every pool member, and send the prompt to the LLM
minimizing estimated loss plus a price weight times cost. New LLMs join a
pool by supplying an error vector; nothing globally retrains.
"""

from .clustering import ClusterModel, assign, assign_all, embeddings_of, fit_kmeans
from .datamodel import (
    LabelMatrix,
    LlmProfile,
    PairwiseRecord,
    PromptRecord,
    SplitSpec,
    load_dataset,
    load_labels,
    load_pairwise,
    load_pool,
    load_prompts,
    make_split,
    restrict,
    save_dataset,
    save_labels,
    save_pool,
    save_prompts,
)
from .errors import (
    ConsistencyError,
    InsufficientDataError,
    ParseError,
    RoutekitError,
    TrainingError,
    ValidationError,
)
from .evaluation import (
    CurveMetrics,
    DeferralCurve,
    aggregate_trials,
    default_lambda_grid,
    fallback_k,
    metrics,
    peak_single_quality,
    select_k,
    sign_test,
    sweep,
    zero_router_curve,
)
from .learned_map import (
    LearnedMapEstimator,
    MapParams,
    TrainConfig,
    learned_estimator,
    loss_and_grad,
    soft_assign,
    train_map,
)
from .llm_features import (
    LlmFeature,
    btl_cluster_scores,
    cluster_error_vector,
    cluster_features_for_pool,
    raw_error_vector,
    raw_features_for_pool,
)
from .routing import (
    ClusterEstimator,
    ConvexHullPolicy,
    KnnEstimator,
    LinearEstimator,
    LossEstimator,
    RoutingDecision,
    build_zero_router,
    cluster_estimator,
    fit_linear_estimator,
    knn_estimator,
    route,
    zero_route,
)
from .synth_bench import (
    BoundCheckReport,
    MixtureSpec,
    bound_check,
    component_posteriors,
    generate,
    oracle_rule_risk,
    resample_llms,
    reseed,
)

__version__ = "0.1.0"

__all__ = [
    "BoundCheckReport",
    "ClusterEstimator",
    "ClusterModel",
    "ConsistencyError",
    "ConvexHullPolicy",
    "CurveMetrics",
    "DeferralCurve",
    "InsufficientDataError",
    "KnnEstimator",
    "LabelMatrix",
    "LearnedMapEstimator",
    "LinearEstimator",
    "LlmFeature",
    "LlmProfile",
    "LossEstimator",
    "MapParams",
    "MixtureSpec",
    "PairwiseRecord",
    "ParseError",
    "PromptRecord",
    "RoutekitError",
    "RoutingDecision",
    "SplitSpec",
    "TrainConfig",
    "TrainingError",
    "ValidationError",
    "aggregate_trials",
    "assign",
    "assign_all",
    "bound_check",
    "btl_cluster_scores",
    "build_zero_router",
    "cluster_error_vector",
    "cluster_estimator",
    "cluster_features_for_pool",
    "component_posteriors",
    "default_lambda_grid",
    "embeddings_of",
    "fallback_k",
    "fit_kmeans",
    "fit_linear_estimator",
    "generate",
    "knn_estimator",
    "learned_estimator",
    "load_dataset",
    "load_labels",
    "load_pairwise",
    "load_pool",
    "load_prompts",
    "loss_and_grad",
    "make_split",
    "metrics",
    "oracle_rule_risk",
    "peak_single_quality",
    "raw_error_vector",
    "raw_features_for_pool",
    "resample_llms",
    "reseed",
    "restrict",
    "route",
    "save_dataset",
    "save_labels",
    "save_pool",
    "save_prompts",
    "select_k",
    "sign_test",
    "soft_assign",
    "sweep",
    "train_map",
    "zero_route",
    "zero_router_curve",
]
