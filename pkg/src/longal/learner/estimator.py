"""The change-detection learner as a scikit-learn style estimator."""

from __future__ import annotations

import copy
import logging
from dataclasses import asdict, dataclass

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ..data.augment import augment_input, pair_rng
from ..errors import EmptyLabeledSet, NonFiniteLoss, ShapeMismatch
from ..utils.seeding import derive_seed
from ..utils.validation import check_inputs, check_masks
from .losses import EPS, focal_loss_torch
from .network import ChangeUNet

log = logging.getLogger(__name__)

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
PREDICT_BATCH = 32


@dataclass
class LearnerConfig:
    lr: float = 1e-4
    batch_size: int = 8
    max_epochs: int = 100
    patience: int = 5
    focal_alpha: float = 1.0
    focal_gamma: float = 2.0
    dropout_rate: float = 0.5
    base_channels: int = 16
    depth: int = 2
    output_prior: float | None = 0.01
    init_seed: int = 0
    augment: bool = True
    warm_start: bool = False

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if not 0 <= self.patience < self.max_epochs:
            raise ValueError("patience must be smaller than max_epochs")
        if self.focal_gamma < 0:
            raise ValueError("focal_gamma must be >= 0")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must lie in [0, 1)")

    def make_estimator(self, **overrides) -> "ChangeDetector":
        return ChangeDetector(**{**asdict(self), **overrides})


class ChangeDetector(BaseEstimator):
    """Per-pixel change probabilities for stacked (baseline, follow-up, difference) inputs.

    ``X`` is an array of shape ``(n, 3, h, w)``; ``y`` holds binary masks ``(n, h, w)``.
    Training is mini-batch Adam on the focal loss with early stopping on a
    validation set; the best-validation snapshot is kept.
    """

    def __init__(
        self,
        lr=1e-4,
        batch_size=8,
        max_epochs=100,
        patience=5,
        focal_alpha=1.0,
        focal_gamma=2.0,
        dropout_rate=0.5,
        base_channels=16,
        depth=2,
        output_prior=0.01,
        init_seed=0,
        augment=True,
        warm_start=False,
    ):
        self.lr = lr
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.focal_alpha = focal_alpha
        self.focal_gamma = focal_gamma
        self.dropout_rate = dropout_rate
        self.base_channels = base_channels
        self.depth = depth
        self.output_prior = output_prior
        self.init_seed = init_seed
        self.augment = augment
        self.warm_start = warm_start

    # ------------------------------------------------------------------ build
    def _build_network(self) -> ChangeUNet:
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(self.init_seed & 0xFFFFFFFF)
            net = ChangeUNet(
                base_channels=self.base_channels,
                depth=self.depth,
                dropout_rate=self.dropout_rate,
                output_prior=self.output_prior,
            )
        return net

    def _make_optimizer(self, net) -> torch.optim.Adam:
        return torch.optim.Adam(net.parameters(), lr=self.lr, betas=ADAM_BETAS, eps=ADAM_EPS)

    def _check_fitted(self):
        if not hasattr(self, "network_"):
            raise NotFittedError("ChangeDetector is not fitted yet")

    def _check_spatial(self, X):
        block = 2**self.depth
        if X.shape[2] % block or X.shape[3] % block:
            raise ShapeMismatch(f"spatial dims {X.shape[2:]} must be divisible by {block}")

    # ------------------------------------------------------------------ train
    def fit(self, X, y, X_val=None, y_val=None, keys=None):
        """Train on (X, y); early-stop on (X_val, y_val).

        Without a validation set the un-augmented training loss drives early
        stopping. ``keys`` (one per sample, e.g. PairKeys) seed the augmentation
        streams; sample indices are used when omitted.
        """
        X = check_inputs(X)
        if X.shape[0] == 0:
            raise EmptyLabeledSet("cannot train on an empty labeled set")
        y = check_masks(y, X)
        self._check_spatial(X)
        if X_val is None:
            X_val, y_val = X, y
        else:
            X_val = check_inputs(X_val, spatial_shape=X.shape[2:])
            y_val = check_masks(y_val, X_val)
        keys = [str(k) for k in keys] if keys is not None else [str(i) for i in range(len(X))]
        if len(keys) != len(X):
            raise ValueError("keys must align with X")

        if not (self.warm_start and hasattr(self, "network_")):
            self.network_ = self._build_network()
            self.optimizer_ = self._make_optimizer(self.network_)
        net, opt = self.network_, self.optimizer_
        self.spatial_shape_ = tuple(X.shape[2:])

        yv_t = torch.from_numpy(y_val)
        Xv_t = torch.from_numpy(X_val)
        best_loss = np.inf
        best_epoch = 0
        best_state = None
        history = []
        n = len(X)
        bs = max(1, int(self.batch_size))
        epoch = 0
        for epoch in range(1, int(self.max_epochs) + 1):
            net.train()
            order = np.random.default_rng(derive_seed("order", self.init_seed, epoch)).permutation(n)
            drop_gen = torch.Generator().manual_seed(derive_seed("train-dropout", self.init_seed, epoch))
            losses = []
            for b0 in range(0, n, bs):
                idx = order[b0 : b0 + bs]
                xb, yb = X[idx], y[idx]
                if self.augment:
                    pairs = [augment_input(X[i], y[i], pair_rng(self.init_seed, epoch, keys[i])) for i in idx]
                    xb = np.stack([p[0] for p in pairs])
                    yb = np.stack([p[1] for p in pairs]).astype(np.float32)
                logits = net(torch.from_numpy(xb), dropout=True, generator=drop_gen)
                loss = focal_loss_torch(logits, torch.from_numpy(yb), self.focal_alpha, self.focal_gamma)
                if not torch.isfinite(loss):
                    raise NonFiniteLoss(f"non-finite training loss at epoch {epoch}, batch starting {b0}")
                opt.zero_grad()
                loss.backward()
                opt.step()
                losses.append(float(loss.detach()))
            val_loss = self._validation_loss(Xv_t, yv_t)
            if not np.isfinite(val_loss):
                raise NonFiniteLoss(f"non-finite validation loss at epoch {epoch}")
            history.append({"epoch": epoch, "train_loss": float(np.mean(losses)), "val_loss": val_loss})
            if val_loss < best_loss:
                best_loss, best_epoch = val_loss, epoch
                best_state = (copy.deepcopy(net.state_dict()), copy.deepcopy(opt.state_dict()))
            elif epoch - best_epoch >= self.patience:
                break

        net.load_state_dict(best_state[0])
        opt.load_state_dict(best_state[1])
        net.eval()
        self.n_epochs_ = epoch
        self.best_epoch_ = best_epoch
        self.best_val_loss_ = best_loss
        self.history_ = history
        return self

    def _validation_loss(self, X_val: torch.Tensor, y_val: torch.Tensor) -> float:
        net = self.network_
        net.eval()
        total = 0.0
        with torch.no_grad():
            for b0 in range(0, len(X_val), PREDICT_BATCH):
                logits = net(X_val[b0 : b0 + PREDICT_BATCH])
                yb = y_val[b0 : b0 + PREDICT_BATCH]
                total += float(focal_loss_torch(logits, yb, self.focal_alpha, self.focal_gamma)) * len(yb)
        return total / len(X_val)

    # -------------------------------------------------------------- inference
    def predict_proba(self, X) -> np.ndarray:
        """Deterministic (dropout-free) change probabilities, shape (n, h, w)."""
        self._check_fitted()
        X = check_inputs(X, spatial_shape=self.spatial_shape_)
        net = self.network_
        net.eval()
        out = []
        with torch.no_grad():
            for b0 in range(0, len(X), PREDICT_BATCH):
                logits = net(torch.from_numpy(X[b0 : b0 + PREDICT_BATCH]))
                out.append(torch.sigmoid(logits).clamp(EPS, 1 - EPS).numpy())
        return np.concatenate(out).astype(np.float64)

    def predict(self, X, threshold: float = 0.5) -> np.ndarray:
        return (self.predict_proba(X) >= threshold).astype(np.uint8)

    def mc_predict(self, X, n_drop: int = 10, keys=None) -> np.ndarray:
        """``n_drop`` stochastic passes with bottleneck dropout, shape (n, n_drop, h, w).

        Pass ``j`` for sample key ``k`` draws its dropout mask from a stream seeded
        by (init_seed, k, j).
        """
        self._check_fitted()
        if n_drop < 1:
            raise ValueError("n_drop must be >= 1")
        X = check_inputs(X, spatial_shape=self.spatial_shape_)
        keys = [str(k) for k in keys] if keys is not None else [str(i) for i in range(len(X))]
        net = self.network_
        net.eval()
        out = np.empty((len(X), n_drop) + tuple(X.shape[2:]), dtype=np.float64)
        with torch.no_grad():
            for i in range(len(X)):
                z, skips = net.encode(torch.from_numpy(X[i : i + 1]))
                zs = []
                for j in range(n_drop):
                    gen = torch.Generator().manual_seed(derive_seed("mc", self.init_seed, keys[i], j))
                    zs.append(net.dropout(z, gen))
                logits = net.decode(torch.cat(zs), [s.expand(n_drop, -1, -1, -1) for s in skips])
                out[i] = torch.sigmoid(logits).clamp(EPS, 1 - EPS).numpy()
        return out

    def transform(self, X) -> np.ndarray:
        """Bottleneck embeddings: global spatial mean of the bottleneck maps, shape (n, D)."""
        self._check_fitted()
        X = check_inputs(X, spatial_shape=self.spatial_shape_)
        net = self.network_
        net.eval()
        out = []
        with torch.no_grad():
            for b0 in range(0, len(X), PREDICT_BATCH):
                z, _ = net.encode(torch.from_numpy(X[b0 : b0 + PREDICT_BATCH]))
                out.append(global_average(z).numpy())
        return np.concatenate(out).astype(np.float64)

    embed = transform

    # -------------------------------------------------------------- parameters
    def flat_parameters(self) -> np.ndarray:
        self._check_fitted()
        return np.concatenate([p.detach().numpy().ravel() for p in self.network_.parameters()])

    def parameter_layout(self) -> list[tuple[str, tuple[int, ...], int]]:
        """(name, shape, offset) of each tensor inside :meth:`flat_parameters`."""
        layout, off = [], 0
        for name, p in self.network_.named_parameters():
            layout.append((name, tuple(p.shape), off))
            off += p.numel()
        return layout


def global_average(features: torch.Tensor) -> torch.Tensor:
    return features.mean(dim=(2, 3))
