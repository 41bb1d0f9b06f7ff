"""Pixel-level uncertainty measures for binary change maps, and pair-level aggregation."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import entr

from ..errors import EmptyUnlabeledSet, InsufficientPasses
from ..utils.validation import check_probability_maps

AGGREGATES = ("mean", "max", "topk_mean")


def least_confidence_pixels(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    return 1.0 - np.maximum(p, 1.0 - p)


def margin_pixels(p) -> np.ndarray:
    """1 - |p - (1 - p)|: the two class probabilities are p and 1 - p."""
    p = np.asarray(p, dtype=np.float64)
    return 1.0 - np.abs(2.0 * p - 1.0)


def entropy_pixels(p) -> np.ndarray:
    """Binary entropy in nats with 0 ln 0 = 0."""
    p = np.asarray(p, dtype=np.float64)
    return entr(p) + entr(1.0 - p)


def bald_pixels(stack) -> np.ndarray:
    """Mutual information from MC passes stacked along axis 0."""
    stack = np.asarray(stack, dtype=np.float64)
    if stack.shape[0] < 2:
        raise InsufficientPasses(f"BALD needs at least 2 passes, got {stack.shape[0]}")
    h_mean = entropy_pixels(stack.mean(axis=0))
    mi = h_mean - entropy_pixels(stack).mean(axis=0)
    # rounding can leave MI a hair outside [0, H(mean)]
    return np.clip(mi, 0.0, h_mean)


def aggregate_pixels(pixel_scores, mode: str = "mean", k_px: int = 16) -> float:
    s = np.asarray(pixel_scores, dtype=np.float64).ravel()
    if mode == "mean":
        return float(s.mean())
    if mode == "max":
        return float(s.max())
    if mode == "topk_mean":
        k = max(1, min(int(k_px), s.size))
        return float(np.sort(s)[-k:].mean())
    raise ValueError(f"unknown aggregate {mode!r}; expected one of {AGGREGATES}")


@dataclass
class ScoreVector:
    """Pair-level informativeness, higher = more informative."""

    keys: list
    scores: np.ndarray
    strategy: str = ""
    iteration: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if len(self.keys) != len(self.scores):
            raise ValueError("keys and scores must align")
        if not np.isfinite(self.scores).all():
            raise ValueError("scores must be finite")

    @property
    def entries(self) -> dict:
        return dict(zip(self.keys, self.scores.tolist()))

    def ranking(self) -> list[int]:
        """Indices by descending score; ties go to the canonical (smallest) key."""
        return sorted(range(len(self.keys)), key=lambda i: (-self.scores[i], self.keys[i]))

    def top(self, q: int) -> list:
        return [self.keys[i] for i in self.ranking()[:q]]

    def to_csv(self, path) -> Path:
        path = Path(path)
        rank = {i: r for r, i in enumerate(self.ranking(), start=1)}
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["pair_key", "score", "rank"])
            for i, key in enumerate(self.keys):
                w.writerow([str(key), f"{self.scores[i]:.10g}", rank[i]])
        return path


def _score(pixel_fn, maps, keys, name, aggregate, k_px, iteration) -> ScoreVector:
    if len(maps) == 0:
        raise EmptyUnlabeledSet(f"{name}: no unlabeled pairs to score")
    keys = list(keys) if keys is not None else list(range(len(maps)))
    scores = [aggregate_pixels(pixel_fn(m), aggregate, k_px) for m in maps]
    return ScoreVector(keys, np.array(scores), name, iteration)


def score_least_confidence(prob_maps: Sequence, keys=None, aggregate="mean", k_px=16, iteration=0) -> ScoreVector:
    maps = [check_probability_maps(m) for m in prob_maps]
    return _score(least_confidence_pixels, maps, keys, "least_confidence", aggregate, k_px, iteration)


def score_margin(prob_maps: Sequence, keys=None, aggregate="mean", k_px=16, iteration=0) -> ScoreVector:
    maps = [check_probability_maps(m) for m in prob_maps]
    return _score(margin_pixels, maps, keys, "margin", aggregate, k_px, iteration)


def score_entropy(prob_maps: Sequence, keys=None, aggregate="mean", k_px=16, iteration=0) -> ScoreVector:
    maps = [check_probability_maps(m) for m in prob_maps]
    return _score(entropy_pixels, maps, keys, "entropy", aggregate, k_px, iteration)


def score_bald(mc_stacks: Sequence, keys=None, aggregate="mean", k_px=16, iteration=0) -> ScoreVector:
    """``mc_stacks[i]`` has shape (n_drop, h, w)."""
    stacks = [check_probability_maps(s, name="MC probabilities") for s in mc_stacks]
    return _score(bald_pixels, stacks, keys, "bald", aggregate, k_px, iteration)
