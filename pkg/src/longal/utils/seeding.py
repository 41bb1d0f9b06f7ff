"""Stable seed derivation; independent of PYTHONHASHSEED and process."""

import hashlib

import numpy as np


def derive_seed(*parts) -> int:
    h = hashlib.blake2b(repr(tuple(str(p) for p in parts)).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little") & (2**63 - 1)


def derived_rng(*parts) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*parts))
