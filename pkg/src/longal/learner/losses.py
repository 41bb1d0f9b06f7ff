from __future__ import annotations

import numpy as np
import torch

from ..errors import ShapeMismatch

EPS = 1e-7


def focal_loss(p, y, alpha: float = 1.0, gamma: float = 2.0) -> float:
    """Mean binary focal loss of probability map ``p`` against mask ``y``."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if p.shape != y.shape:
        raise ShapeMismatch(f"probabilities {p.shape} vs mask {y.shape}")
    p = np.clip(p, EPS, 1.0 - EPS)
    pos = -alpha * (1.0 - p) ** gamma * np.log(p)
    neg = -alpha * p**gamma * np.log1p(-p)
    return float(np.mean(np.where(y > 0.5, pos, neg)))


def focal_loss_torch(logits: torch.Tensor, y: torch.Tensor, alpha: float = 1.0, gamma: float = 2.0) -> torch.Tensor:
    if logits.shape != y.shape:
        raise ShapeMismatch(f"logits {tuple(logits.shape)} vs mask {tuple(y.shape)}")
    p = torch.sigmoid(logits).clamp(EPS, 1.0 - EPS)
    pos = -alpha * (1.0 - p) ** gamma * torch.log(p)
    neg = -alpha * p**gamma * torch.log1p(-p)
    return torch.where(y > 0.5, pos, neg).mean()
