from __future__ import annotations

import numpy as np

from ..errors import EmptyUnlabeledSet
from .kmeans import kmeans

ORDERS = ("diversity_first", "uncertainty_first")


def _round_robin(cluster_members: list[list[int]], n: int) -> list[int]:
    picked: list[int] = []
    cursors = [0] * len(cluster_members)
    while len(picked) < n:
        progressed = False
        for ci, members in enumerate(cluster_members):
            if len(picked) == n:
                break
            if cursors[ci] < len(members):
                picked.append(members[cursors[ci]])
                cursors[ci] += 1
                progressed = True
        if not progressed:
            break
    return picked


def _clusters_by_size(labels: np.ndarray, members: list[int], rank_key) -> list[list[int]]:
    """Clusters in ascending size order, each listing its members most-uncertain first."""
    groups: dict[int, list[int]] = {}
    for i in members:
        groups.setdefault(int(labels[i]), []).append(i)
    ordered = sorted(groups.items(), key=lambda kv: (len(kv[1]), kv[0]))
    return [sorted(m, key=rank_key) for _, m in ordered]


def select_cluster_margin(
    keys,
    embeddings,
    margin_scores,
    q: int,
    *,
    n_clusters: int = 20,
    cluster_seed: int = 42,
    candidate_multiplier: int = 10,
    order: str = "diversity_first",
) -> list:
    """k-means clustering combined with margin sampling.

    ``margin_scores`` are pair-level scores from :func:`score_margin` (higher =
    smaller margin). With ``order="diversity_first"`` a round-robin over
    clusters (smallest cluster first, lowest margin first within a cluster)
    draws ``n = min(q * candidate_multiplier, |U|)`` candidates, and the ``q``
    lowest-margin candidates are returned. ``"uncertainty_first"`` reverses the
    two passes: the ``n`` lowest-margin pairs are clustered and the round-robin
    picks ``q`` of them.
    """
    if len(keys) == 0:
        raise EmptyUnlabeledSet("cluster_margin: no unlabeled pairs")
    if q > len(keys):
        raise ValueError(f"q={q} exceeds the {len(keys)} unlabeled pairs")
    if order not in ORDERS:
        raise ValueError(f"order must be one of {ORDERS}")
    perm = sorted(range(len(keys)), key=lambda i: keys[i])
    keys = [keys[i] for i in perm]
    E = np.asarray(embeddings, dtype=np.float64)[perm]
    s = np.asarray(margin_scores, dtype=np.float64)[perm]
    n = min(q * int(candidate_multiplier), len(keys))

    def by_margin(i):
        return (-s[i], i)

    if order == "diversity_first":
        labels, _ = kmeans(E, n_clusters, seed=cluster_seed)
        clusters = _clusters_by_size(labels, list(range(len(keys))), by_margin)
        candidates = _round_robin(clusters, n)
        chosen = sorted(candidates, key=by_margin)[:q]
    else:
        candidates = sorted(range(len(keys)), key=by_margin)[:n]
        labels_c, _ = kmeans(E[candidates], n_clusters, seed=cluster_seed)
        labels = np.full(len(keys), -1)
        labels[candidates] = labels_c
        clusters = _clusters_by_size(labels, candidates, by_margin)
        chosen = _round_robin(clusters, q)
    return [keys[i] for i in chosen]
