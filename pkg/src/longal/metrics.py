"""Voxel-level change-detection metrics and report exports."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ChangeMap, PairKey, assemble_change_map
from .errors import ShapeMismatch


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion(pred, gt) -> Confusion:
    p = np.asarray(pred.voxels if isinstance(pred, ChangeMap) else pred).astype(bool)
    g = np.asarray(gt.voxels if isinstance(gt, ChangeMap) else gt).astype(bool)
    if p.shape != g.shape:
        raise ShapeMismatch(f"prediction {p.shape} vs ground truth {g.shape}")
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return Confusion(tp, fp, fn, p.size - tp - fp - fn)


# Empty-set conventions: both masks empty scores 1; an empty denominator with
# something on the other side scores 0.


def dice(c: Confusion) -> float:
    denom = 2 * c.tp + c.fp + c.fn
    return 1.0 if denom == 0 else 2 * c.tp / denom


def precision(c: Confusion) -> float:
    denom = c.tp + c.fp
    if denom == 0:
        return 1.0 if c.fn == 0 else 0.0
    return c.tp / denom


def recall(c: Confusion) -> float:
    denom = c.tp + c.fn
    if denom == 0:
        return 1.0 if c.fp == 0 else 0.0
    return c.tp / denom


def scores(c: Confusion) -> tuple[float, float, float]:
    """(dice, recall, precision)."""
    return dice(c), recall(c), precision(c)


def predict_change_map(learner, record, t: int, t2: int, threshold: float = 0.5) -> ChangeMap:
    """Slice-wise prediction for one (baseline, follow-up) volume pair of a patient."""
    vols = {v.timepoint: v for v in record.volumes}
    base, follow = vols[t].data, vols[t2].data
    c = base.shape[2]
    X = np.stack(
        [np.stack([base[:, :, k], follow[:, :, k], follow[:, :, k] - base[:, :, k]]) for k in range(c)]
    ).astype(np.float32)
    probs = learner.predict_proba(X)
    return assemble_change_map(list(enumerate(probs)), threshold, patient_id=record.patient_id, t=t, t2=t2)


def ground_truth_map(record, t: int, t2: int) -> ChangeMap:
    c = record.shape[2]
    voxels = np.stack([record.masks[PairKey(record.patient_id, k, t, t2)] for k in range(c)], axis=-1)
    return ChangeMap(record.patient_id, t, t2, voxels.astype(np.uint8))


def volume_confusions(learner, dataset, threshold: float = 0.5) -> list[tuple[tuple, Confusion]]:
    out = []
    for rec in dataset.patients:
        ts = rec.timepoints
        for i, t in enumerate(ts):
            for t2 in ts[i + 1 :]:
                pred = predict_change_map(learner, rec, t, t2, threshold)
                out.append(((rec.patient_id, t, t2), confusion(pred, ground_truth_map(rec, t, t2))))
    return out


def evaluate_testset(learner, dataset, threshold: float = 0.5, average: str = "micro") -> tuple[float, float, float]:
    """(dice, recall, precision) over every (patient, t, t') change map of ``dataset``.

    ``average="micro"`` pools one confusion over all voxels; ``"macro"`` averages
    the per-volume metrics.
    """
    per_volume = volume_confusions(learner, dataset, threshold)
    if average == "micro":
        total = Confusion()
        for _, c in per_volume:
            total = total + c
        return scores(total)
    if average == "macro":
        arr = np.array([scores(c) for _, c in per_volume])
        return tuple(float(x) for x in arr.mean(axis=0))
    raise ValueError("average must be 'micro' or 'macro'")


def export_selection_distribution(log, dataset, path, repeat: int = 0) -> Path:
    """One row per pool pair: key, ground-truth positive pixels, selection flag and iteration."""
    selected_at = log.selection_iterations(repeat)
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pair_key", "target_pixel_count", "selected", "selection_iteration"])
        for rec in dataset.patients:
            for key in rec.pair_keys():
                it = selected_at.get(key)
                w.writerow([str(key), int(rec.masks[key].sum()), int(it is not None), "" if it is None else it])
    return path
