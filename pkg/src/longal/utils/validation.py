"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch


def check_inputs(X, *, n_channels: int = 3, spatial_shape: tuple[int, int] | None = None) -> np.ndarray:
    """Validate a stack of model inputs shaped (n, channels, h, w)."""
    X = np.asarray(X, dtype=np.float32)
    if X.ndim == 3:
        X = X[None]
    if X.ndim != 4 or X.shape[1] != n_channels:
        raise ShapeMismatch(f"expected inputs of shape (n, {n_channels}, h, w), got {X.shape}")
    if spatial_shape is not None and tuple(X.shape[2:]) != tuple(spatial_shape):
        raise ShapeMismatch(f"inputs are {X.shape[2:]}, model was fitted on {tuple(spatial_shape)}")
    if not np.isfinite(X).all():
        raise ValueError("inputs contain NaN or Inf")
    return X


def check_masks(y, X: np.ndarray) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim == 2:
        y = y[None]
    if y.shape != (X.shape[0],) + X.shape[2:]:
        raise ShapeMismatch(f"masks {y.shape} do not match inputs {X.shape}")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("masks must be binary")
    return y.astype(np.float32)


def check_probability_maps(P, *, name: str = "probabilities") -> np.ndarray:
    P = np.asarray(P, dtype=np.float64)
    if not np.isfinite(P).all():
        raise ValueError(f"{name} contain NaN or Inf")
    if (P < 0).any() or (P > 1).any():
        raise ValueError(f"{name} must lie in [0, 1]")
    return P
