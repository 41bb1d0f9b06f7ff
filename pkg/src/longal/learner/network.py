"""Compact encoder-decoder with skip connections and a dropout bottleneck."""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F


def _block(cin: int, cout: int, groups: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, padding=1),
        nn.GroupNorm(min(groups, cout), cout),
        nn.ReLU(inplace=True),
        nn.Conv2d(cout, cout, 3, padding=1),
        nn.GroupNorm(min(groups, cout), cout),
        nn.ReLU(inplace=True),
    )


class ChangeUNet(nn.Module):
    """UNet-style dense predictor: ``depth`` pooling stages, one logit per pixel.

    The bottleneck output is the embedding space for diversity strategies and the
    only place dropout is applied.
    """

    def __init__(
        self,
        in_channels: int = 3,
        base_channels: int = 16,
        depth: int = 2,
        dropout_rate: float = 0.5,
        norm_groups: int = 4,
        output_prior: float | None = 0.01,
    ):
        super().__init__()
        self.depth = depth
        self.dropout_rate = dropout_rate
        chans = [base_channels * 2**i for i in range(depth + 1)]
        self.encoders = nn.ModuleList()
        cin = in_channels
        for c in chans[:-1]:
            self.encoders.append(_block(cin, c, norm_groups))
            cin = c
        self.bottleneck = _block(chans[-2], chans[-1], norm_groups)
        self.ups = nn.ModuleList()
        self.decoders = nn.ModuleList()
        for i in range(depth, 0, -1):
            self.ups.append(nn.ConvTranspose2d(chans[i], chans[i - 1], 2, stride=2))
            self.decoders.append(_block(2 * chans[i - 1], chans[i - 1], norm_groups))
        self.head = nn.Conv2d(chans[0], 1, 1)
        # zero weights; bias at the logit of the expected positive fraction so that
        # rare positives, not the background, shape the first updates
        nn.init.zeros_(self.head.weight)
        bias = 0.0 if output_prior is None else math.log(output_prior / (1.0 - output_prior))
        nn.init.constant_(self.head.bias, bias)

    @property
    def embedding_dim(self) -> int:
        return self.bottleneck[3].out_channels

    def encode(self, x: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        skips = []
        for enc in self.encoders:
            x = enc(x)
            skips.append(x)
            x = F.max_pool2d(x, 2)
        return self.bottleneck(x), skips

    def decode(self, z: torch.Tensor, skips: list[torch.Tensor]) -> torch.Tensor:
        for up, dec, skip in zip(self.ups, self.decoders, reversed(skips)):
            z = up(z)
            z = dec(torch.cat([z, skip], dim=1))
        return self.head(z).squeeze(1)

    def dropout(self, z: torch.Tensor, generator: torch.Generator | None = None) -> torch.Tensor:
        p = self.dropout_rate
        if p <= 0:
            return z
        keep = torch.rand(z.shape, generator=generator, dtype=z.dtype, device=z.device) >= p
        return z * keep / (1.0 - p)

    def forward(self, x: torch.Tensor, *, dropout: bool = False, generator: torch.Generator | None = None):
        """Logits of shape (n, h, w)."""
        z, skips = self.encode(x)
        if dropout:
            z = self.dropout(z, generator)
        return self.decode(z, skips)
