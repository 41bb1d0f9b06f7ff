from __future__ import annotations

import numpy as np

from ..errors import TooFewPatients
from .dataset import Dataset


def split_patients(d: Dataset, ratios=(0.6, 0.2, 0.2), seed: int = 0) -> tuple[Dataset, Dataset, Dataset]:
    """Patient-level train / val / test split; no patient straddles two splits."""
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    ids = sorted(d.patient_ids)
    n = len(ids)
    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise TooFewPatients(f"{n} patients cannot fill a {ratios} split with nonempty parts")
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [ids[i] for i in order]
    parts = shuffled[:n_train], shuffled[n_train : n_train + n_val], shuffled[n_train + n_val :]
    return tuple(d.subset(p, tag) for p, tag in zip(parts, ("train", "val", "test")))
