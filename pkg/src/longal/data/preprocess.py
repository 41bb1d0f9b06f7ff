"""Crop / normalize / resize for slices, masks and whole patient series."""

from __future__ import annotations

import logging
import warnings
from dataclasses import replace

import numpy as np
from scipy.ndimage import zoom

from ..core import Slice, Volume
from ..errors import DegenerateRangeWarning
from .dataset import Dataset, PatientRecord

log = logging.getLogger(__name__)

BBox = tuple[int, int, int, int]  # i0, i1, j0, j1 (half-open)


def foreground_bbox(volumes) -> BBox:
    """Union bounding box of nonzero voxels over a series of (h, w, c) volumes."""
    fg = np.zeros(volumes[0].shape[:2], dtype=bool)
    for v in volumes:
        data = v.data if isinstance(v, Volume) else np.asarray(v)
        fg |= (data != 0).any(axis=2) if data.ndim == 3 else data != 0
    if not fg.any():
        h, w = fg.shape
        return 0, h, 0, w
    rows = np.flatnonzero(fg.any(axis=1))
    cols = np.flatnonzero(fg.any(axis=0))
    return int(rows[0]), int(rows[-1]) + 1, int(cols[0]), int(cols[-1]) + 1


def resize(img: np.ndarray, target: tuple[int, int], order: int = 1) -> np.ndarray:
    """Bilinear (order=1) or nearest (order=0) resize to exactly ``target``."""
    if img.shape == tuple(target):
        return img.copy()
    factors = (target[0] / img.shape[0], target[1] / img.shape[1])
    out = zoom(img, factors, order=order, mode="nearest", grid_mode=False)
    if out.shape != tuple(target):  # guard against rounding in zoom's output shape
        out = out[: target[0], : target[1]]
        out = np.pad(out, [(0, target[0] - out.shape[0]), (0, target[1] - out.shape[1])], mode="edge")
    return out


def normalize(x: np.ndarray, vmin: float, vmax: float) -> np.ndarray:
    if vmax <= vmin:
        warnings.warn("degenerate intensity range (max == min); slice zeroed", DegenerateRangeWarning, stacklevel=3)
        return np.zeros_like(x, dtype=np.float32)
    return ((x - vmin) / (vmax - vmin)).astype(np.float32)


def preprocess_slice(
    s: Slice,
    target: tuple[int, int] = (256, 256),
    *,
    bbox: BBox | None = None,
    value_range: tuple[float, float] | None = None,
) -> Slice:
    """Crop to ``bbox``, min-max normalize with ``value_range`` then resize bilinearly.

    ``value_range`` defaults to the slice's own range; pass the volume's range to
    normalize per volume.
    """
    px = np.asarray(s.pixels, dtype=np.float32)
    if px.size == 0:
        raise ValueError("empty slice")
    if bbox is not None:
        i0, i1, j0, j1 = bbox
        px = px[i0:i1, j0:j1]
    vmin, vmax = value_range if value_range is not None else (float(px.min()), float(px.max()))
    px = normalize(px, vmin, vmax)
    px = np.clip(resize(px, target, order=1), 0.0, 1.0)
    return replace(s, pixels=px)


def preprocess_mask(mask: np.ndarray, target: tuple[int, int], *, bbox: BBox | None = None) -> np.ndarray:
    m = np.asarray(mask, dtype=np.uint8)
    if bbox is not None:
        i0, i1, j0, j1 = bbox
        m = m[i0:i1, j0:j1]
    return resize(m, target, order=0).astype(np.uint8)


def preprocess_patient(rec: PatientRecord, target: tuple[int, int]) -> PatientRecord:
    bbox = foreground_bbox(rec.volumes)
    volumes = []
    for v in rec.volumes:
        i0, i1, j0, j1 = bbox
        cropped = v.data[i0:i1, j0:j1]
        vrange = (float(cropped.min()), float(cropped.max()))
        if vrange[1] <= vrange[0]:
            log.warning("patient %s t%d: constant volume, zeroed", v.patient_id, v.timepoint)
        planes = [
            preprocess_slice(s, target, bbox=bbox, value_range=vrange).pixels
            for s in (Slice(v.patient_id, v.timepoint, k, v.data[:, :, k]) for k in range(v.shape[2]))
        ]
        volumes.append(Volume(v.patient_id, v.timepoint, np.stack(planes, axis=-1), v.spacing))
    masks = {k: preprocess_mask(m, target, bbox=bbox) for k, m in rec.masks.items()}
    # lesion bookkeeping refers to the raw grid and is dropped
    return PatientRecord(rec.patient_id, volumes, masks)


def preprocess_dataset(d: Dataset, target: tuple[int, int]) -> Dataset:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateRangeWarning)
        return Dataset([preprocess_patient(p, target) for p in d.patients], d.split_tag)
