"""Longitudinal data model: volumes, slice pairs, the pair pool and change maps."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateSlice,
    InsufficientTimepoints,
    InvalidPair,
    MissingSlice,
    ShapeMismatch,
)

_KEY_RE = re.compile(r"^(?P<pid>.+)/k(?P<k>\d+)/t(?P<t>\d+)-t(?P<t2>\d+)$")


class PairKey(NamedTuple):
    """Identity of a slice pair. Tuple ordering is the canonical pool order."""

    patient_id: str
    slice_index: int
    t: int
    t2: int

    def __str__(self) -> str:
        return f"{self.patient_id}/k{self.slice_index}/t{self.t}-t{self.t2}"

    @classmethod
    def parse(cls, text: str) -> "PairKey":
        m = _KEY_RE.match(text.strip())
        if m is None:
            raise ValueError(f"malformed pair key: {text!r}")
        return cls(m["pid"], int(m["k"]), int(m["t"]), int(m["t2"]))


@dataclass
class Volume:
    patient_id: str
    timepoint: int
    data: np.ndarray  # (h, w, c)
    spacing: tuple[float, float, float] | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim == 2:
            self.data = self.data[:, :, None]
        if self.data.ndim != 3 or min(self.data.shape) < 1:
            raise DimensionMismatch(f"volume data must be h x w x c, got {self.data.shape}")
        if self.timepoint < 1:
            raise ValueError("timepoints are numbered from 1")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass
class Slice:
    patient_id: str
    timepoint: int
    slice_index: int
    pixels: np.ndarray  # (h, w)


@dataclass(frozen=True)
class SlicePair:
    key: PairKey
    baseline: Slice
    followup: Slice
    difference: np.ndarray = field(repr=False)

    def __post_init__(self):
        b, f = self.baseline, self.followup
        if not f.timepoint > b.timepoint:
            raise InvalidPair(f"follow-up t'={f.timepoint} must be after baseline t={b.timepoint}")
        if b.patient_id != f.patient_id or b.slice_index != f.slice_index:
            raise InvalidPair("baseline and follow-up must share patient and slice index")
        if b.pixels.shape != f.pixels.shape:
            raise DimensionMismatch("baseline and follow-up slice shapes differ")

    @classmethod
    def from_slices(cls, baseline: Slice, followup: Slice) -> "SlicePair":
        key = PairKey(baseline.patient_id, baseline.slice_index, baseline.timepoint, followup.timepoint)
        return cls(key, baseline, followup, difference(baseline.pixels, followup.pixels))

    @property
    def shape(self) -> tuple[int, int]:
        return self.baseline.pixels.shape


@dataclass(frozen=True)
class ChangeLabel:
    key: PairKey
    mask: np.ndarray  # (h, w) uint8 in {0, 1}

    def __post_init__(self):
        m = np.asarray(self.mask)
        if m.ndim != 2 or not np.isin(m, (0, 1)).all():
            raise ValueError("change mask must be a binary 2-D array")
        object.__setattr__(self, "mask", m.astype(np.uint8, copy=False))


@dataclass
class ChangeMap:
    patient_id: str
    t: int
    t2: int
    voxels: np.ndarray  # (h, w, c) uint8

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.voxels.shape


def difference(baseline: np.ndarray, followup: np.ndarray) -> np.ndarray:
    """Signed follow-up minus baseline; new bright lesions come out positive."""
    return np.asarray(followup, dtype=np.float32) - np.asarray(baseline, dtype=np.float32)


def slice_volume(v: Volume) -> list[Slice]:
    return [
        Slice(v.patient_id, v.timepoint, k, v.data[:, :, k])
        for k in range(v.data.shape[2])
    ]


def _group_by_patient(volumes: Iterable[Volume]) -> dict[str, list[Volume]]:
    groups: dict[str, list[Volume]] = {}
    for v in volumes:
        groups.setdefault(v.patient_id, []).append(v)
    for pid, vols in groups.items():
        vols.sort(key=lambda v: v.timepoint)
        shapes = {v.shape for v in vols}
        if len(shapes) != 1:
            raise DimensionMismatch(f"patient {pid} has volumes of differing shape: {sorted(shapes)}")
        if len({v.timepoint for v in vols}) != len(vols):
            raise ValueError(f"patient {pid} has repeated timepoints")
    return groups


def pair_keys(patient_id: str, timepoints: Sequence[int], n_slices: int) -> list[PairKey]:
    """All (k, t, t') keys for one patient, t' > t, in canonical order."""
    ts = sorted(timepoints)
    return sorted(
        PairKey(patient_id, k, t, t2) for k in range(n_slices) for t, t2 in combinations(ts, 2)
    )


def build_pair_pool(volumes: Iterable[Volume]) -> "PairPool":
    groups = _group_by_patient(volumes)
    if not groups:
        raise InsufficientTimepoints("no volumes given")
    pairs: list[SlicePair] = []
    for pid in sorted(groups):
        vols = groups[pid]
        if len(vols) < 2:
            raise InsufficientTimepoints(f"patient {pid} has {len(vols)} timepoint(s); need >= 2")
        slices = {v.timepoint: slice_volume(v) for v in vols}
        for key in pair_keys(pid, list(slices), vols[0].shape[2]):
            pairs.append(SlicePair.from_slices(slices[key.t][key.slice_index], slices[key.t2][key.slice_index]))
    return PairPool(pairs)


def assemble_input(p: SlicePair) -> np.ndarray:
    """Channel-major (3, h, w) model input: baseline, follow-up, difference."""
    return np.stack([p.baseline.pixels, p.followup.pixels, p.difference]).astype(np.float32, copy=False)


def assemble_inputs(pairs: Sequence[SlicePair]) -> np.ndarray:
    return np.stack([assemble_input(p) for p in pairs])


def assemble_change_map(
    preds: Sequence[tuple[int, np.ndarray]],
    threshold: float = 0.5,
    *,
    patient_id: str = "",
    t: int = 1,
    t2: int = 2,
) -> ChangeMap:
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    by_index: dict[int, np.ndarray] = {}
    for k, prob in preds:
        if k in by_index:
            raise DuplicateSlice(f"slice {k} predicted more than once")
        by_index[k] = np.asarray(prob)
    c = len(by_index)
    missing = sorted(set(range(c)) - set(by_index))
    if missing or c == 0:
        raise MissingSlice(f"missing predictions for slices {missing or [0]}")
    shapes = {p.shape for p in by_index.values()}
    if len(shapes) != 1:
        raise ShapeMismatch(f"per-slice predictions have differing shapes {sorted(shapes)}")
    voxels = np.stack([by_index[k] >= threshold for k in range(c)], axis=-1).astype(np.uint8)
    return ChangeMap(patient_id, t, t2, voxels)


class PairPool:
    """The full pair pool with its labeled / unlabeled partition.

    Pairs are held in canonical order (patient_id, slice_index, t, t').
    """

    def __init__(self, pairs: Sequence[SlicePair]):
        self.pairs = sorted(pairs, key=lambda p: p.key)
        self._index = {p.key: i for i, p in enumerate(self.pairs)}
        if len(self._index) != len(self.pairs):
            raise ValueError("duplicate pair keys in pool")
        self.labels: dict[PairKey, ChangeLabel] = {}

    def __len__(self) -> int:
        return len(self.pairs)

    def __contains__(self, key) -> bool:
        return key in self._index

    @property
    def keys(self) -> list[PairKey]:
        return [p.key for p in self.pairs]

    @property
    def labeled(self) -> set[PairKey]:
        return set(self.labels)

    @property
    def unlabeled_keys(self) -> list[PairKey]:
        return [p.key for p in self.pairs if p.key not in self.labels]

    @property
    def labeled_keys(self) -> list[PairKey]:
        return [p.key for p in self.pairs if p.key in self.labels]

    def index(self, key: PairKey) -> int:
        return self._index[key]

    def pair(self, key: PairKey) -> SlicePair:
        return self.pairs[self._index[key]]

    def add_label(self, label: ChangeLabel) -> None:
        if label.key not in self._index:
            raise KeyError(f"{label.key} is not in the pool")
        if label.key in self.labels:
            raise ValueError(f"{label.key} is already labeled")
        if label.mask.shape != self.pair(label.key).shape:
            raise DimensionMismatch(f"mask shape {label.mask.shape} does not match pair {label.key}")
        self.labels[label.key] = label

    def inputs(self, keys: Sequence[PairKey]) -> np.ndarray:
        return assemble_inputs([self.pair(k) for k in keys])

    def masks(self, keys: Sequence[PairKey]) -> np.ndarray:
        return np.stack([self.labels[k].mask for k in keys])

    def check_partition(self) -> None:
        labeled = set(self.labels)
        unlabeled = set(self.unlabeled_keys)
        universe = set(self._index)
        assert labeled.isdisjoint(unlabeled)
        assert labeled | unlabeled == universe
