"""Training-time augmentation: flip, quarter-turn rotation and Gaussian blur."""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from scipy.ndimage import gaussian_filter

from ..core import ChangeLabel, SlicePair, difference
from ..utils.seeding import derived_rng

P_FLIP = 0.5
P_ROTATE = 0.5
P_BLUR = 0.5
BLUR_SIGMA = (0.5, 1.5)


def augment_arrays(baseline, followup, mask, rng):
    """Apply the random transforms to one (baseline, follow-up, mask) triple.

    Geometric transforms act identically on all three arrays; blur touches the
    images only. Returns (baseline, followup, difference, mask).
    """
    # fixed draw order keeps the stream independent of which transforms fire
    u_flip, u_rot, u_blur = rng.random(3)
    quarter_turns = int(rng.integers(1, 4))
    sigma = float(rng.uniform(*BLUR_SIGMA))

    b, f, m = baseline, followup, mask
    if u_flip < P_FLIP:
        b, f, m = b[:, ::-1], f[:, ::-1], m[:, ::-1]
    if u_rot < P_ROTATE:
        if b.shape[0] != b.shape[1]:
            quarter_turns = 2
        b, f, m = (np.rot90(a, quarter_turns) for a in (b, f, m))
    if u_blur < P_BLUR:
        b = gaussian_filter(b, sigma, mode="nearest")
        f = gaussian_filter(f, sigma, mode="nearest")
    b = np.ascontiguousarray(b, dtype=np.float32)
    f = np.ascontiguousarray(f, dtype=np.float32)
    return b, f, difference(b, f), np.ascontiguousarray(m)


def augment(pair: SlicePair, label: ChangeLabel, rng) -> tuple[SlicePair, ChangeLabel]:
    b, f, d, m = augment_arrays(pair.baseline.pixels, pair.followup.pixels, label.mask, rng)
    new_pair = SlicePair(pair.key, replace(pair.baseline, pixels=b), replace(pair.followup, pixels=f), d)
    return new_pair, ChangeLabel(label.key, m)


def augment_input(x: np.ndarray, mask: np.ndarray, rng) -> tuple[np.ndarray, np.ndarray]:
    """Same as :func:`augment` on a stacked (3, h, w) model input."""
    b, f, d, m = augment_arrays(x[0], x[1], mask, rng)
    return np.stack([b, f, d]), m


def pair_rng(global_seed: int, epoch: int, key) -> np.random.Generator:
    """Per-epoch, per-pair stream so batch order never changes an outcome."""
    return derived_rng("augment", global_seed, epoch, str(key))
