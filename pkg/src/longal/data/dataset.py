"""In-memory longitudinal dataset and its raw-binary on-disk layout.

Layout of a dataset directory::

    dataset.json                      patient list, format version
    <patient_id>/t<t>.json            volume header (dims, timepoint, patient_id)
    <patient_id>/t<t>.f32             little-endian float32, plane-major (c, h, w)
    <patient_id>/masks/k<k>_t<t>-t<t'>.u8   uint8 change mask (h, w)
    <patient_id>/lesions.json         optional generator bookkeeping
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..core import ChangeLabel, PairKey, PairPool, Volume, build_pair_pool, pair_keys
from ..errors import DatasetFormatError, DimensionMismatch, MissingGroundTruth

FORMAT_NAME = "longal-dataset"
FORMAT_VERSION = 1


@dataclass
class Lesion:
    center: tuple[int, int, int]
    diameter: int
    half_thickness: int
    timepoint: int  # first timepoint at which the lesion is visible
    intensity: float

    def footprint(self, shape: tuple[int, int, int]) -> np.ndarray:
        """Boolean voxel mask in the unshifted (baseline) frame."""
        h, w, c = shape
        ci, cj, ck = self.center
        r = self.diameter / 2.0
        # even diameters are centred between pixels
        off = 0.5 if self.diameter % 2 == 0 else 0.0
        ii, jj = np.mgrid[0:h, 0:w]
        disk = (ii - (ci + off)) ** 2 + (jj - (cj + off)) ** 2 <= r * r
        out = np.zeros(shape, dtype=bool)
        for k in range(max(0, ck - self.half_thickness), min(c, ck + self.half_thickness + 1)):
            out[:, :, k] = disk
        return out


@dataclass
class PatientRecord:
    patient_id: str
    volumes: list[Volume]
    masks: dict[PairKey, np.ndarray] = field(default_factory=dict)
    lesions: list[Lesion] = field(default_factory=list)
    shifts: dict[int, tuple[int, int]] = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.volumes[0].shape

    @property
    def timepoints(self) -> list[int]:
        return [v.timepoint for v in self.volumes]

    def pair_keys(self) -> list[PairKey]:
        return pair_keys(self.patient_id, self.timepoints, self.shape[2])


@dataclass
class Dataset:
    patients: list[PatientRecord]
    split_tag: str | None = None

    def __post_init__(self):
        self.patients = sorted(self.patients, key=lambda p: p.patient_id)
        ids = [p.patient_id for p in self.patients]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate patient ids in dataset")

    @property
    def patient_ids(self) -> list[str]:
        return [p.patient_id for p in self.patients]

    def patient(self, patient_id: str) -> PatientRecord:
        for p in self.patients:
            if p.patient_id == patient_id:
                return p
        raise KeyError(patient_id)

    def volumes(self) -> list[Volume]:
        return [v for p in self.patients for v in p.volumes]

    def pair_pool(self) -> PairPool:
        return build_pair_pool(self.volumes())

    def n_pairs(self) -> int:
        return sum(len(p.pair_keys()) for p in self.patients)

    def mask(self, key: PairKey) -> np.ndarray:
        try:
            return self._mask_index()[key]
        except KeyError:
            raise MissingGroundTruth(f"no ground-truth mask for {key}") from None

    def _mask_index(self) -> dict[PairKey, np.ndarray]:
        idx = getattr(self, "_masks_cache", None)
        if idx is None:
            idx = {k: m for p in self.patients for k, m in p.masks.items()}
            self._masks_cache = idx
        return idx

    def labeled_pool(self) -> PairPool:
        """Pair pool with every ground-truth mask attached (validation / test use)."""
        pool = self.pair_pool()
        for key in pool.keys:
            pool.add_label(ChangeLabel(key, self.mask(key)))
        return pool

    def subset(self, patient_ids, split_tag: str | None = None) -> "Dataset":
        wanted = set(patient_ids)
        return Dataset([p for p in self.patients if p.patient_id in wanted], split_tag)

    def validate(self) -> None:
        for p in self.patients:
            shapes = {v.shape for v in p.volumes}
            if len(shapes) != 1:
                raise DimensionMismatch(f"patient {p.patient_id} has volumes of differing shape")
            h, w, _ = p.shape
            for key in p.pair_keys():
                if key not in p.masks:
                    raise MissingGroundTruth(f"no ground-truth mask for {key}")
                if p.masks[key].shape != (h, w):
                    raise DimensionMismatch(f"mask {key} is {p.masks[key].shape}, slices are {(h, w)}")


def _mask_filename(key: PairKey) -> str:
    return f"k{key.slice_index}_t{key.t}-t{key.t2}.u8"


def save_dataset(d: Dataset, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "split_tag": d.split_tag,
        "patients": d.patient_ids,
    }
    (out / "dataset.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for p in d.patients:
        pdir = out / p.patient_id
        (pdir / "masks").mkdir(parents=True, exist_ok=True)
        for v in p.volumes:
            h, w, c = v.shape
            header = {
                "patient_id": v.patient_id,
                "timepoint": v.timepoint,
                "dims": [h, w, c],
                "dtype": "<f4",
                "layout": "plane-major",
                "spacing": list(v.spacing) if v.spacing is not None else None,
            }
            (pdir / f"t{v.timepoint}.json").write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
            planes = np.ascontiguousarray(v.data.transpose(2, 0, 1), dtype="<f4")
            (pdir / f"t{v.timepoint}.f32").write_bytes(planes.tobytes())
        for key in sorted(p.masks):
            (pdir / "masks" / _mask_filename(key)).write_bytes(
                np.ascontiguousarray(p.masks[key], dtype=np.uint8).tobytes()
            )
        if p.lesions or p.shifts:
            book = {
                "lesions": [asdict(les) for les in p.lesions],
                "shifts": {str(t): list(s) for t, s in sorted(p.shifts.items())},
            }
            (pdir / "lesions.json").write_text(json.dumps(book, indent=2, sort_keys=True) + "\n")
    return out


def _read_header(header_path: Path) -> tuple[str, int, tuple[int, int, int], dict]:
    try:
        header = json.loads(header_path.read_text())
        h, w, c = (int(x) for x in header["dims"])
        t = int(header["timepoint"])
        pid = str(header["patient_id"])
    except (KeyError, ValueError, TypeError) as exc:
        raise DatasetFormatError(f"bad volume header {header_path}: {exc}") from exc
    if header.get("dtype", "<f4") != "<f4" or header.get("layout", "plane-major") != "plane-major":
        raise DatasetFormatError(f"{header_path}: unsupported dtype/layout")
    return pid, t, (h, w, c), header


def _read_volume(header_path: Path) -> Volume:
    pid, t, (h, w, c), header = _read_header(header_path)
    raw = header_path.with_suffix(".f32").read_bytes()
    if len(raw) != h * w * c * 4:
        raise DimensionMismatch(f"{header_path.with_suffix('.f32')}: {len(raw)} bytes, header says {h}x{w}x{c}")
    planes = np.frombuffer(raw, dtype="<f4").reshape(c, h, w)
    spacing = header.get("spacing")
    return Volume(pid, t, planes.transpose(1, 2, 0).astype(np.float32), tuple(spacing) if spacing else None)


def _read_manifest(root: Path) -> dict:
    try:
        manifest = json.loads((root / "dataset.json").read_text())
    except FileNotFoundError as exc:
        raise DatasetFormatError(f"{root} has no dataset.json") from exc
    if manifest.get("format") != FORMAT_NAME or manifest.get("version") != FORMAT_VERSION:
        raise DatasetFormatError(f"{root}: unsupported dataset format {manifest.get('format')!r}")
    return manifest


def pair_keys_from_headers(path) -> list[PairKey]:
    """The pair pool implied by the volume headers alone; no voxel data is read."""
    root = Path(path)
    keys = []
    for pid in _read_manifest(root)["patients"]:
        heads = [_read_header(hp) for hp in sorted((root / pid).glob("t*.json"))]
        if any(h[0] != pid for h in heads):
            raise DatasetFormatError(f"{root / pid}: header patient_id does not match directory")
        if len({h[2] for h in heads}) > 1:
            raise DimensionMismatch(f"patient {pid} has volumes of differing shape")
        if heads:
            keys.extend(pair_keys(pid, sorted(h[1] for h in heads), heads[0][2][2]))
    return sorted(keys)


def load_dataset(path) -> Dataset:
    root = Path(path)
    manifest = _read_manifest(root)
    patients = []
    for pid in manifest["patients"]:
        pdir = root / pid
        vols = sorted((_read_volume(hp) for hp in pdir.glob("t*.json")), key=lambda v: v.timepoint)
        if any(v.patient_id != pid for v in vols):
            raise DatasetFormatError(f"{pdir}: header patient_id does not match directory")
        if len({v.shape for v in vols}) > 1:
            raise DimensionMismatch(f"patient {pid} has volumes of differing shape")
        rec = PatientRecord(pid, vols)
        h, w, _ = rec.shape
        for key in rec.pair_keys():
            mpath = pdir / "masks" / _mask_filename(key)
            if not mpath.exists():
                raise MissingGroundTruth(f"missing mask file {mpath}")
            raw = mpath.read_bytes()
            if len(raw) != h * w:
                raise DimensionMismatch(f"{mpath}: {len(raw)} bytes, expected {h * w}")
            rec.masks[key] = np.frombuffer(raw, dtype=np.uint8).reshape(h, w).copy()
        book_path = pdir / "lesions.json"
        if book_path.exists():
            book = json.loads(book_path.read_text())
            rec.lesions = [
                Lesion(tuple(x["center"]), x["diameter"], x["half_thickness"], x["timepoint"], x["intensity"])
                for x in book["lesions"]
            ]
            rec.shifts = {int(t): tuple(s) for t, s in book["shifts"].items()}
        patients.append(rec)
    d = Dataset(patients, manifest.get("split_tag"))
    d.validate()
    return d


def dataset_digest(d: Dataset) -> str:
    """Content hash over volumes and masks, in canonical order."""
    h = hashlib.sha256()
    for p in d.patients:
        h.update(p.patient_id.encode())
        for v in p.volumes:
            h.update(str((v.timepoint, v.shape)).encode())
            h.update(np.ascontiguousarray(v.data, dtype="<f4").tobytes())
        for key in sorted(p.masks):
            h.update(str(key).encode())
            h.update(np.ascontiguousarray(p.masks[key], dtype=np.uint8).tobytes())
    return h.hexdigest()
