from __future__ import annotations

import numpy as np

from ..errors import DimensionMismatch, EmptyUnlabeledSet


def select_kcenter(unlabeled_keys, unlabeled_emb, labeled_emb, q: int) -> list:
    """Greedy k-center: repeatedly take the unlabeled point farthest from every center.

    Centers are the labeled embeddings plus the points chosen so far. Ties go to
    the canonical (smallest) key.
    """
    if len(unlabeled_keys) == 0:
        raise EmptyUnlabeledSet("k-center: no unlabeled pairs")
    U = np.asarray(unlabeled_emb, dtype=np.float64)
    if U.ndim != 2 or len(U) != len(unlabeled_keys):
        raise DimensionMismatch("unlabeled embeddings must be (n, D) and align with keys")
    L = np.asarray(labeled_emb, dtype=np.float64)
    if L.size == 0:
        L = np.empty((0, U.shape[1]))
    elif L.ndim != 2 or L.shape[1] != U.shape[1]:
        raise DimensionMismatch(f"embedding dims differ: {U.shape} vs {L.shape}")
    if q > len(U):
        raise ValueError(f"q={q} exceeds the {len(U)} unlabeled pairs")

    order = sorted(range(len(unlabeled_keys)), key=lambda i: unlabeled_keys[i])
    keys = [unlabeled_keys[i] for i in order]
    U = U[order]

    min_d = np.full(len(U), np.inf)
    for row in L:
        min_d = np.minimum(min_d, np.sqrt(((U - row) ** 2).sum(axis=1)))
    chosen = []
    taken = np.zeros(len(U), dtype=bool)
    for _ in range(q):
        cand = np.where(taken, -np.inf, min_d)
        i = int(np.argmax(cand))
        chosen.append(keys[i])
        taken[i] = True
        min_d = np.minimum(min_d, np.sqrt(((U - U[i]) ** 2).sum(axis=1)))
    return chosen
