"""Independent reference implementations used as test oracles."""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import torch

from longal.learner import ChangeUNet, focal_loss_torch


# ------------------------------------------------------------- k-center
def brute_kcenter(keys, U, L, q):
    """Textbook greedy k-center: recompute every min-distance from scratch each round."""
    U = [list(map(float, u)) for u in U]
    centers = [list(map(float, x)) for x in L]
    order = sorted(range(len(keys)), key=lambda i: keys[i])
    chosen = []
    for _ in range(q):
        best, best_d = None, -1.0
        for i in order:
            if i in chosen:
                continue
            if centers:
                d = min(math.dist(U[i], c) for c in centers)
            else:
                d = math.inf
            if d > best_d:  # strict: the first in pool order wins ties
                best, best_d = i, d
        chosen.append(best)
        centers.append(U[best])
    return [keys[i] for i in chosen]


# --------------------------------------------------------------- metrics
def tally(pred, gt):
    """Per-voxel scan, no vectorisation."""
    tp = fp = fn = tn = 0
    for p, g in zip(np.ravel(pred).tolist(), np.ravel(gt).tolist()):
        if p and g:
            tp += 1
        elif p:
            fp += 1
        elif g:
            fn += 1
        else:
            tn += 1
    return tp, fp, fn, tn


def exact_metrics(tp, fp, fn):
    """(dice, recall, precision) as Fractions with the empty-set conventions."""

    def ratio(num, den, other_empty):
        if den == 0:
            return Fraction(1) if other_empty else Fraction(0)
        return Fraction(num, den)

    d = Fraction(1) if 2 * tp + fp + fn == 0 else Fraction(2 * tp, 2 * tp + fp + fn)
    return d, ratio(tp, tp + fn, fp == 0), ratio(tp, tp + fp, fn == 0)


# --------------------------------------------------------- gradient check
def gradient_check(n_inputs=10, n_params=120, eps=1e-6, seed=0, hw=8):
    """Relative errors between backprop and central differences of the focal loss.

    A float64 network with a randomly initialised head (the zero head would make
    most gradients vanish) and dropout disabled. Returns one relative error per
    input: ||g - g_fd|| / max(||g||, ||g_fd||) over the sampled parameters.
    """
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    net = ChangeUNet(base_channels=4, depth=2, dropout_rate=0.0, norm_groups=2).double()
    torch.nn.init.normal_(net.head.weight, std=0.5)
    torch.nn.init.normal_(net.head.bias, std=0.5)
    params = list(net.parameters())
    sizes = [p.numel() for p in params]
    total = sum(sizes)
    picks = rng.choice(total, size=min(n_params, total), replace=False)
    offsets = np.cumsum([0] + sizes)

    def locate(flat_i):
        t = int(np.searchsorted(offsets, flat_i, side="right") - 1)
        return params[t], int(flat_i - offsets[t])

    errs = []
    for _ in range(n_inputs):
        x = torch.from_numpy(rng.random((2, 3, hw, hw)))
        y = torch.from_numpy((rng.random((2, hw, hw)) > 0.8).astype(np.float64))

        def loss():
            return focal_loss_torch(net(x), y, 1.0, 2.0)

        net.zero_grad()
        loss().backward()
        g = np.array([locate(i)[0].grad.view(-1)[locate(i)[1]].item() for i in picks])
        fd = np.empty_like(g)
        with torch.no_grad():
            for n, i in enumerate(picks):
                p, j = locate(i)
                flat = p.view(-1)
                orig = flat[j].item()
                flat[j] = orig + eps
                up = loss().item()
                flat[j] = orig - eps
                down = loss().item()
                flat[j] = orig
                fd[n] = (up - down) / (2 * eps)
        errs.append(float(np.linalg.norm(g - fd) / max(np.linalg.norm(g), np.linalg.norm(fd), 1e-300)))
    return errs, len(picks)
