from .cluster_margin import select_cluster_margin
from .hybrid import cosine_density, hybrid_scores, mutual_information_matrix, quantize, select_hybrid
from .kcenter import select_kcenter
from .kmeans import kmeans
from .query import STRATEGIES, StrategyConfig, query, score_pool
from .random import select_random
from .scores import (
    ScoreVector,
    aggregate_pixels,
    bald_pixels,
    entropy_pixels,
    least_confidence_pixels,
    margin_pixels,
    score_bald,
    score_entropy,
    score_least_confidence,
    score_margin,
)

__all__ = [
    "STRATEGIES",
    "ScoreVector",
    "StrategyConfig",
    "aggregate_pixels",
    "bald_pixels",
    "cosine_density",
    "entropy_pixels",
    "hybrid_scores",
    "kmeans",
    "least_confidence_pixels",
    "margin_pixels",
    "mutual_information_matrix",
    "quantize",
    "query",
    "score_bald",
    "score_entropy",
    "score_least_confidence",
    "score_margin",
    "score_pool",
    "select_cluster_margin",
    "select_hybrid",
    "select_kcenter",
    "select_random",
]
