from __future__ import annotations

import numpy as np


def kmeans(X, n_clusters: int, seed: int = 42, max_iter: int = 300) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm from ``n_clusters`` distinct seeded data points.

    Stops once assignments are stable or after ``max_iter`` rounds. An empty
    cluster is re-seeded at the point farthest from its current centroid.
    Returns (labels, centers).
    """
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    if n == 0:
        raise ValueError("kmeans on an empty set")
    k = max(1, min(int(n_clusters), n))
    rng = np.random.default_rng(seed)
    centers = X[rng.choice(n, size=k, replace=False)].copy()
    labels = None
    for _ in range(max_iter):
        d = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = np.argmin(d, axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        own = d[np.arange(n), labels].copy()
        for c in range(k):
            members = labels == c
            if members.any():
                centers[c] = X[members].mean(axis=0)
            else:
                far = int(np.argmax(own))
                centers[c] = X[far]
                own[far] = -1.0
    return labels, centers
