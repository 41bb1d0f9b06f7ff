from __future__ import annotations

import numpy as np

from ..errors import EmptyUnlabeledSet


def select_random(keys, q: int, rng: np.random.Generator | int) -> list:
    """Uniform sample without replacement; independent of presentation order."""
    if len(keys) == 0:
        raise EmptyUnlabeledSet("random: no unlabeled pairs")
    if q > len(keys):
        raise ValueError(f"q={q} exceeds the {len(keys)} unlabeled pairs")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    canonical = sorted(keys)
    return [canonical[i] for i in rng.choice(len(canonical), size=q, replace=False)]
