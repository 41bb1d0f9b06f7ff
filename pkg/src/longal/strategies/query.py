"""Strategy configuration and the query dispatcher over the unlabeled pool."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import PairPool
from ..errors import EmptyUnlabeledSet
from .cluster_margin import ORDERS, select_cluster_margin
from .hybrid import select_hybrid
from .kcenter import select_kcenter
from .random import select_random
from .scores import AGGREGATES, ScoreVector, bald_pixels, aggregate_pixels, score_entropy, score_least_confidence, score_margin

STRATEGIES = (
    "random",
    "least_confidence",
    "margin",
    "entropy",
    "bald",
    "kcenter",
    "cluster_margin",
    "hybrid",
)
CHUNK = 64


@dataclass
class StrategyConfig:
    name: str = "random"
    n_drop: int = 10
    n_clusters: int = 20
    cluster_seed: int = 42
    candidate_multiplier: int = 10
    cluster_margin_order: str = "diversity_first"
    hybrid_prefilter: int = 500
    hybrid_diversity_weight: float = 2.0
    hybrid_density_weight: float = 1.0
    aggregate: str = "mean"
    topk_px: int = 16
    mi_bins: int = 16

    def __post_init__(self):
        if self.name not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.name!r}; expected one of {STRATEGIES}")
        if self.aggregate not in AGGREGATES:
            raise ValueError(f"unknown aggregate {self.aggregate!r}")
        if self.cluster_margin_order not in ORDERS:
            raise ValueError(f"cluster_margin_order must be one of {ORDERS}")
        if self.hybrid_diversity_weight <= 0 or self.hybrid_density_weight <= 0:
            raise ValueError("hybrid weights must be > 0")
        if min(self.n_clusters, self.hybrid_prefilter, self.candidate_multiplier, self.topk_px) < 1:
            raise ValueError("n_clusters, prefilters and topk_px must be >= 1")
        if self.n_drop < 1 or self.mi_bins < 2:
            raise ValueError("n_drop must be >= 1 and mi_bins >= 2")


def _chunks(keys, size=CHUNK):
    for i in range(0, len(keys), size):
        yield keys[i : i + size]


def predict_pool(learner, pool: PairPool, keys) -> np.ndarray:
    return np.concatenate([learner.predict_proba(pool.inputs(c)) for c in _chunks(keys)])


def embed_pool(learner, pool: PairPool, keys) -> np.ndarray:
    if len(keys) == 0:
        return np.empty((0, learner.network_.embedding_dim))
    return np.concatenate([learner.transform(pool.inputs(c)) for c in _chunks(keys)])


def bald_pool(learner, pool: PairPool, keys, cfg: StrategyConfig, iteration: int = 0) -> ScoreVector:
    """BALD scores computed chunk-wise so MC stacks never sit in memory all at once."""
    scores = []
    for c in _chunks(keys):
        stacks = learner.mc_predict(pool.inputs(c), cfg.n_drop, keys=c)
        scores.extend(aggregate_pixels(bald_pixels(s), cfg.aggregate, cfg.topk_px) for s in stacks)
    return ScoreVector(list(keys), np.array(scores), "bald", iteration)


def score_pool(cfg: StrategyConfig, learner, pool: PairPool, keys=None, iteration: int = 0) -> ScoreVector | None:
    """Pair-level scores used by score-based strategies; None for the purely geometric ones."""
    keys = pool.unlabeled_keys if keys is None else sorted(keys)
    agg = dict(aggregate=cfg.aggregate, k_px=cfg.topk_px, iteration=iteration)
    if cfg.name in ("least_confidence", "margin", "entropy", "cluster_margin"):
        probs = predict_pool(learner, pool, keys)
        fn = {
            "least_confidence": score_least_confidence,
            "margin": score_margin,
            "entropy": score_entropy,
            "cluster_margin": score_margin,
        }[cfg.name]
        return fn(probs, keys, **agg)
    if cfg.name in ("bald", "hybrid"):
        return bald_pool(learner, pool, keys, cfg, iteration)
    return None


def query(
    cfg: StrategyConfig,
    learner,
    pool: PairPool,
    q: int,
    rng: np.random.Generator | int | None = None,
    *,
    iteration: int = 0,
    return_scores: bool = False,
):
    """Select ``q`` distinct unlabeled keys from ``pool`` with the configured strategy."""
    unlabeled = pool.unlabeled_keys
    if not unlabeled:
        raise EmptyUnlabeledSet("the unlabeled pool is empty")
    if not 1 <= q <= len(unlabeled):
        raise ValueError(f"q={q} must lie in [1, {len(unlabeled)}]")

    scores = None
    if cfg.name == "random":
        chosen = select_random(unlabeled, q, rng if rng is not None else 0)
    elif cfg.name in ("least_confidence", "margin", "entropy", "bald"):
        scores = score_pool(cfg, learner, pool, unlabeled, iteration)
        chosen = scores.top(q)
    elif cfg.name == "kcenter":
        chosen = select_kcenter(
            unlabeled, embed_pool(learner, pool, unlabeled), embed_pool(learner, pool, pool.labeled_keys), q
        )
    elif cfg.name == "cluster_margin":
        scores = score_pool(cfg, learner, pool, unlabeled, iteration)
        chosen = select_cluster_margin(
            unlabeled,
            embed_pool(learner, pool, unlabeled),
            scores.scores,
            q,
            n_clusters=cfg.n_clusters,
            cluster_seed=cfg.cluster_seed,
            candidate_multiplier=cfg.candidate_multiplier,
            order=cfg.cluster_margin_order,
        )
    else:  # hybrid
        scores = score_pool(cfg, learner, pool, unlabeled, iteration)
        chosen = select_hybrid(
            unlabeled,
            scores.scores,
            embed_pool(learner, pool, unlabeled),
            embed_pool(learner, pool, pool.labeled_keys),
            q,
            prefilter=cfg.hybrid_prefilter,
            mi_bins=cfg.mi_bins,
            diversity_weight=cfg.hybrid_diversity_weight,
            density_weight=cfg.hybrid_density_weight,
        )
    assert len(set(chosen)) == q and not set(chosen) & pool.labeled
    return (chosen, scores) if return_scores else chosen
