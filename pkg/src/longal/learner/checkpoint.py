"""Binary learner checkpoints.

Layout: 8-byte magic, uint32 version, uint32 header length, uint32 CRC-32 of
everything after the fixed prefix, UTF-8 JSON header, then little-endian
float32 blocks: parameters, Adam first moments, Adam second moments (the latter
two only when optimizer state is present).
"""

from __future__ import annotations

import io
import json
import struct
import zlib
from pathlib import Path

import numpy as np
import torch

from ..errors import CorruptCheckpoint
from .estimator import ChangeDetector

MAGIC = b"LGALNET\x00"
VERSION = 1


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


def _pack(header: dict, blocks: list[np.ndarray]) -> bytes:
    hbytes = json.dumps(header, sort_keys=True).encode()
    payload = io.BytesIO()
    payload.write(hbytes)
    for b in blocks:
        payload.write(np.ascontiguousarray(b, dtype="<f4").tobytes())
    body = payload.getvalue()
    return MAGIC + struct.pack("<III", VERSION, len(hbytes), zlib.crc32(body)) + body


def learner_to_bytes(model: ChangeDetector) -> bytes:
    model._check_fitted()
    params = list(model.network_.parameters())
    flat = model.flat_parameters()
    state = model.optimizer_.state
    has_opt = all(p in state and "exp_avg" in state[p] for p in params)
    blocks = [flat]
    step = 0.0
    if has_opt:
        blocks.append(np.concatenate([state[p]["exp_avg"].numpy().ravel() for p in params]))
        blocks.append(np.concatenate([state[p]["exp_avg_sq"].numpy().ravel() for p in params]))
        step = float(state[params[0]]["step"])
    header = {
        "params": {k: _jsonable(v) for k, v in model.get_params().items()},
        "layout": [[name, list(shape), off] for name, shape, off in model.parameter_layout()],
        "n_params": int(flat.size),
        "spatial_shape": list(model.spatial_shape_),
        "optimizer": {"present": has_opt, "step": step},
        "fit": {
            "n_epochs": int(getattr(model, "n_epochs_", 0)),
            "best_epoch": int(getattr(model, "best_epoch_", 0)),
            "best_val_loss": float(getattr(model, "best_val_loss_", float("nan"))),
        },
    }
    return _pack(header, blocks)


def learner_from_bytes(data: bytes) -> ChangeDetector:
    if len(data) < 20 or data[:8] != MAGIC:
        raise CorruptCheckpoint("bad learner checkpoint magic")
    version, hlen, crc = struct.unpack("<III", data[8:20])
    if version != VERSION:
        raise CorruptCheckpoint(f"unsupported learner checkpoint version {version}")
    if zlib.crc32(data[20:]) != crc:
        raise CorruptCheckpoint("learner checkpoint checksum mismatch")
    try:
        header = json.loads(data[20 : 20 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"unreadable checkpoint header: {exc}") from exc
    n = header["n_params"]
    nblocks = 3 if header["optimizer"]["present"] else 1
    body = data[20 + hlen :]
    if len(body) != 4 * n * nblocks:
        raise CorruptCheckpoint(f"checkpoint body is {len(body)} bytes, expected {4 * n * nblocks}")
    blocks = np.frombuffer(body, dtype="<f4").reshape(nblocks, n)

    model = ChangeDetector(**header["params"])
    net = model._build_network()
    params = list(net.parameters())
    if [list(p.shape) for p in params] != [shape for _, shape, _ in header["layout"]]:
        raise CorruptCheckpoint("parameter layout does not match the architecture")

    def assign(block):
        out, off = [], 0
        for p in params:
            out.append(torch.from_numpy(block[off : off + p.numel()].reshape(p.shape).astype(np.float32)))
            off += p.numel()
        return out

    with torch.no_grad():
        for p, v in zip(params, assign(blocks[0])):
            p.copy_(v)
    opt = model._make_optimizer(net)
    if nblocks == 3:
        for p, m1, m2 in zip(params, assign(blocks[1]), assign(blocks[2])):
            opt.state[p] = {
                "step": torch.tensor(header["optimizer"]["step"]),
                "exp_avg": m1.clone(),
                "exp_avg_sq": m2.clone(),
            }
    net.eval()
    model.network_ = net
    model.optimizer_ = opt
    model.spatial_shape_ = tuple(header["spatial_shape"])
    model.n_epochs_ = header["fit"]["n_epochs"]
    model.best_epoch_ = header["fit"]["best_epoch"]
    model.best_val_loss_ = header["fit"]["best_val_loss"]
    return model


def save_learner(model: ChangeDetector, path) -> Path:
    path = Path(path)
    path.write_bytes(learner_to_bytes(model))
    return path


def load_learner(path) -> ChangeDetector:
    return learner_from_bytes(Path(path).read_bytes())
