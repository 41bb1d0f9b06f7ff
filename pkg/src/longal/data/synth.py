"""Deterministic synthetic longitudinal volumes with known new-lesion masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from ..core import PairKey, Volume
from ..errors import GeometryError
from .dataset import Dataset, Lesion, PatientRecord

MAX_PLACEMENT_ATTEMPTS = 100


@dataclass
class SynthParams:
    n_patients: int = 6
    timepoints_per_patient: int = 3
    h: int = 64
    w: int = 64
    c: int = 6
    lesion_count_range: tuple[int, int] = (1, 3)
    lesion_diameter_range: tuple[int, int] = (3, 10)
    noise_sigma: float = 0.02
    misalignment_px: int = 1
    seed: int = 0
    # lesions already present at the first timepoint; defaults to lesion_count_range
    old_lesion_count_range: tuple[int, int] | None = None
    # explicit {timepoint: count} of new lesions, overriding lesion_count_range
    new_lesion_schedule: dict[int, int] | None = None

    def validate(self) -> None:
        if min(self.n_patients, self.h, self.w, self.c) < 1:
            raise ValueError("n_patients, h, w and c must be >= 1")
        if self.timepoints_per_patient < 2:
            raise ValueError("each patient needs at least two timepoints")
        lo, hi = self.lesion_diameter_range
        if not 1 <= lo <= hi <= min(self.h, self.w):
            raise ValueError(f"lesion_diameter_range {self.lesion_diameter_range} outside [1, {min(self.h, self.w)}]")
        for rng in (self.lesion_count_range, self.old_lesion_count_range or (0, 0)):
            if not 0 <= rng[0] <= rng[1]:
                raise ValueError(f"invalid count range {rng}")
        if self.noise_sigma < 0 or self.misalignment_px < 0:
            raise ValueError("noise_sigma and misalignment_px must be >= 0")


def _foreground(shape, rng) -> np.ndarray:
    """Elliptical head cross-sections, narrowing towards the outer slices."""
    h, w, c = shape
    ci = (h - 1) / 2 + rng.uniform(-0.03, 0.03) * h
    cj = (w - 1) / 2 + rng.uniform(-0.03, 0.03) * w
    a = 0.42 * h * rng.uniform(0.95, 1.05)
    b = 0.38 * w * rng.uniform(0.95, 1.05)
    ii, jj = np.mgrid[0:h, 0:w]
    fg = np.zeros(shape, dtype=bool)
    for k in range(c):
        s = 1.0 if c == 1 else 1.0 - 0.25 * abs(2.0 * k / (c - 1) - 1.0)
        fg[:, :, k] = ((ii - ci) / max(a * s, 0.5)) ** 2 + ((jj - cj) / max(b * s, 0.5)) ** 2 <= 1.0
    return fg


def _texture(shape, rng) -> np.ndarray:
    field = gaussian_filter(rng.normal(size=shape), sigma=(3.0, 3.0, 1.0), mode="reflect")
    sd = field.std()
    if sd > 0:
        field = field / sd
    return np.clip(0.45 + 0.06 * field, 0.2, 0.7)


def _valid_centers(free: np.ndarray, d: int, half_thickness: int) -> np.ndarray:
    """All (i, j, k) at which a lesion of this size lies entirely inside ``free``."""
    h, w, c = free.shape
    ok = free.copy()
    r = d // 2 + 1
    probe = Lesion((r, r, half_thickness), d, half_thickness, 1, 1.0).footprint((2 * r + 1, 2 * r + 1, 2 * half_thickness + 1))
    for di, dj, dk in np.argwhere(probe) - (r, r, half_thickness):
        shifted = np.zeros_like(free)
        shifted[max(0, -di) : h - max(0, di), max(0, -dj) : w - max(0, dj), max(0, -dk) : c - max(0, dk)] = free[
            max(0, di) : h - max(0, -di), max(0, dj) : w - max(0, -dj), max(0, dk) : c - max(0, -dk)
        ]
        ok &= shifted
    return np.argwhere(ok)


def _place(fg, occupied, timepoint, p: SynthParams, rng) -> Lesion:
    """Draw size and thickness, then a center uniformly among the positions where it fits."""
    dmin, dmax = p.lesion_diameter_range
    free = fg & ~occupied
    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        d = int(rng.integers(dmin, dmax + 1))
        half_thickness = int(rng.integers(0, 2))
        intensity = float(rng.uniform(0.85, 1.0))
        centers = _valid_centers(free, d, half_thickness)
        if len(centers):
            ci, cj, ck = (int(v) for v in centers[rng.integers(len(centers))])
            return Lesion((ci, cj, ck), d, half_thickness, timepoint, intensity)
    raise GeometryError(f"no free position for a lesion of diameter in {p.lesion_diameter_range}")


def _translate(a: np.ndarray, di: int, dj: int) -> np.ndarray:
    """Integer in-plane shift with zero fill."""
    out = np.zeros_like(a)
    h, w = a.shape[:2]
    src_i = slice(max(0, -di), min(h, h - di))
    dst_i = slice(max(0, di), min(h, h + di))
    src_j = slice(max(0, -dj), min(w, w - dj))
    dst_j = slice(max(0, dj), min(w, w + dj))
    out[dst_i, dst_j] = a[src_i, src_j]
    return out


def change_mask_volume(lesions, shape, t: int, t2: int, shift=(0, 0)) -> np.ndarray:
    """Union of lesions that appeared after ``t`` and are present at ``t2``, in the ``t2`` frame."""
    m = np.zeros(shape, dtype=bool)
    for les in lesions:
        if t < les.timepoint <= t2:
            m |= les.footprint(shape)
    return _translate(m, *shift).astype(np.uint8)


def generate_patient(patient_id: str, p: SynthParams, rng: np.random.Generator) -> PatientRecord:
    shape = (p.h, p.w, p.c)
    T = p.timepoints_per_patient
    fg = _foreground(shape, rng)
    tissue = _texture(shape, rng) * fg

    lesions: list[Lesion] = []
    occupied = np.zeros(shape, dtype=bool)

    def add(timepoint: int, count: int):
        nonlocal occupied
        for _ in range(count):
            les = _place(fg, occupied, timepoint, p, rng)
            # one-voxel in-plane margin keeps lesions from touching
            vox = les.footprint(shape)
            grown = vox.copy()
            grown[1:] |= vox[:-1]
            grown[:-1] |= vox[1:]
            grown[:, 1:] |= vox[:, :-1]
            grown[:, :-1] |= vox[:, 1:]
            occupied |= grown
            lesions.append(les)

    old_lo, old_hi = p.old_lesion_count_range or p.lesion_count_range
    add(1, int(rng.integers(old_lo, old_hi + 1)))
    for t in range(2, T + 1):
        if p.new_lesion_schedule is not None:
            n_new = int(p.new_lesion_schedule.get(t, 0))
        else:
            n_new = int(rng.integers(p.lesion_count_range[0], p.lesion_count_range[1] + 1))
        add(t, n_new)

    shifts = {1: (0, 0)}
    for t in range(2, T + 1):
        m = p.misalignment_px
        shifts[t] = (int(rng.integers(-m, m + 1)), int(rng.integers(-m, m + 1)))

    volumes = []
    for t in range(1, T + 1):
        vol = tissue.copy()
        for les in lesions:
            if les.timepoint <= t:
                vox = les.footprint(shape)
                vol[vox] = np.maximum(vol[vox], les.intensity)
        if p.noise_sigma > 0:
            vol = vol + fg * rng.normal(0.0, p.noise_sigma, size=shape)
        vol = np.clip(vol, 0.0, 1.0) * fg
        volumes.append(Volume(patient_id, t, _translate(vol, *shifts[t]).astype(np.float32)))

    rec = PatientRecord(patient_id, volumes, lesions=lesions, shifts=shifts)
    for t in range(1, T + 1):
        for t2 in range(t + 1, T + 1):
            mvol = change_mask_volume(lesions, shape, t, t2, shifts[t2])
            for k in range(p.c):
                rec.masks[PairKey(patient_id, k, t, t2)] = np.ascontiguousarray(mvol[:, :, k])
    return rec


def generate_synthetic(p: SynthParams) -> Dataset:
    p.validate()
    width = max(3, len(str(p.n_patients)))
    patients = []
    for n in range(p.n_patients):
        rng = np.random.default_rng(np.random.SeedSequence([p.seed, n]))
        patients.append(generate_patient(f"p{n:0{width}d}", p, rng))
    return Dataset(patients)
