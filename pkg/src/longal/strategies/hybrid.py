"""Uncertainty prefilter followed by density (cosine) + diversity (mutual information) ranking."""

from __future__ import annotations

import logging

import numpy as np

from ..errors import DimensionMismatch, EmptyUnlabeledSet

log = logging.getLogger(__name__)


def quantize(values: np.ndarray, lo: float, hi: float, bins: int) -> np.ndarray:
    """Equal-width bin codes in [0, bins) over the range [lo, hi]."""
    if hi <= lo:
        return np.zeros(np.shape(values), dtype=np.int64)
    codes = np.floor((np.asarray(values) - lo) / (hi - lo) * bins).astype(np.int64)
    return np.clip(codes, 0, bins - 1)


def mutual_information_matrix(A: np.ndarray, B: np.ndarray, bins: int) -> np.ndarray:
    """Empirical MI (nats) between every row of ``A`` and every row of ``B``.

    Rows are integer code vectors of equal length D; each row is treated as D
    paired samples of one discrete variable.
    """
    D = A.shape[1]
    onehot_a = np.eye(bins)[A]  # (m, D, bins)
    onehot_b = np.eye(bins)[B]  # (l, D, bins)
    pa = onehot_a.mean(axis=1)  # (m, bins)
    pb = onehot_b.mean(axis=1)  # (l, bins)
    out = np.empty((len(A), len(B)))
    # bounds the (m, chunk, bins, bins) joint table to a few tens of MB
    chunk = max(1, 32768 // max(1, len(A)))
    for b0 in range(0, len(B), chunk):
        ob = onehot_b[b0 : b0 + chunk]
        joint = np.einsum("mdi,ldj->mlij", onehot_a, ob) / D
        indep = pa[:, None, :, None] * pb[None, b0 : b0 + chunk, None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(joint > 0, joint * np.log(joint / np.where(indep > 0, indep, 1.0)), 0.0)
        out[:, b0 : b0 + chunk] = terms.sum(axis=(2, 3))
    return out


def cosine_density(E: np.ndarray) -> np.ndarray:
    """Mean cosine similarity of each row to every other row (0 for a single row)."""
    m = len(E)
    if m < 2:
        return np.zeros(m)
    norms = np.linalg.norm(E, axis=1, keepdims=True)
    unit = np.divide(E, norms, out=np.zeros_like(E), where=norms > 0)
    S = unit @ unit.T
    return (S.sum(axis=1) - np.diag(S)) / (m - 1)


def _minmax(x: np.ndarray) -> np.ndarray:
    lo, hi = x.min(), x.max()
    if hi - lo <= 1e-12 * max(1.0, abs(hi)):
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


def hybrid_scores(
    cand_emb: np.ndarray,
    labeled_emb: np.ndarray,
    *,
    mi_bins: int = 16,
    diversity_weight: float = 2.0,
    density_weight: float = 1.0,
) -> dict[str, np.ndarray]:
    E = np.asarray(cand_emb, dtype=np.float64)
    L = np.asarray(labeled_emb, dtype=np.float64)
    if L.size == 0:
        L = np.empty((0, E.shape[1]))
    elif L.ndim != 2 or L.shape[1] != E.shape[1]:
        raise DimensionMismatch(f"embedding dims differ: {E.shape} vs {L.shape}")
    density = cosine_density(E)
    if len(L) == 0:
        log.info("hybrid: no labeled pairs yet, diversity term set to 0")
        diversity = np.zeros(len(E))
    else:
        allv = np.concatenate([E.ravel(), L.ravel()])
        lo, hi = float(allv.min()), float(allv.max())
        qa, qb = quantize(E, lo, hi, mi_bins), quantize(L, lo, hi, mi_bins)
        diversity = -mutual_information_matrix(qa, qb, mi_bins).max(axis=1)
    score = (diversity_weight * _minmax(diversity) + density_weight * _minmax(density)) / (
        diversity_weight + density_weight
    )
    return {"density": density, "diversity": diversity, "score": score}


def select_hybrid(
    keys,
    uncertainty,
    embeddings,
    labeled_emb,
    q: int,
    *,
    prefilter: int = 500,
    mi_bins: int = 16,
    diversity_weight: float = 2.0,
    density_weight: float = 1.0,
) -> list:
    """Keep the ``prefilter`` most uncertain pairs, then rank them by weighted diversity + density.

    ``uncertainty`` holds pair-level BALD scores. Residual ties fall back to the
    prefilter (uncertainty) rank.
    """
    if len(keys) == 0:
        raise EmptyUnlabeledSet("hybrid: no unlabeled pairs")
    if q > len(keys):
        raise ValueError(f"q={q} exceeds the {len(keys)} unlabeled pairs")
    u = np.asarray(uncertainty, dtype=np.float64)
    E = np.asarray(embeddings, dtype=np.float64)
    ranked = sorted(range(len(keys)), key=lambda i: (-u[i], keys[i]))
    cand = ranked[: min(int(prefilter), len(keys))]
    parts = hybrid_scores(
        E[cand], labeled_emb, mi_bins=mi_bins, diversity_weight=diversity_weight, density_weight=density_weight
    )
    order = sorted(range(len(cand)), key=lambda r: (-parts["score"][r], r))
    return [keys[cand[r]] for r in order[:q]]
