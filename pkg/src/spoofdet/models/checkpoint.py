"""Binary model checkpoints.

Layout (all integers little-endian)::

    b"SPDT"  u32 version
    u32 config_len  config_len bytes of UTF-8 JSON {"kind", "config"}
    u32 n_tensors
    n_tensors x ( u16 name_len, name, u8 ndim, ndim x u32 extent, float64 values )

The JSON block is written with sorted keys so identical models give
identical bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path
from typing import Union

import numpy as np

from .cct import CctConfig, CctModel
from .cnn import CnnConfig, CnnModel
from .linear import LinearHyperparams, LinearModel

MAGIC = b"SPDT"
VERSION = 1

Model = Union[CctModel, CnnModel, LinearModel]
PathLike = Union[str, Path]


class CheckpointError(ValueError):
    pass


def _tensors(model: Model) -> dict[str, np.ndarray]:
    if isinstance(model, LinearModel):
        return {"weights": model.weights, "bias": np.array([model.bias])}
    return {k: v.data for k, v in model.params.items()}


def _header(model: Model) -> dict:
    if isinstance(model, LinearModel):
        return {"kind": model.kind, "config": {"n_features": int(model.weights.size), **asdict(model.hyperparams)}}
    return {"kind": model.kind, "config": model.config_dict()}


def dumps(model: Model) -> bytes:
    cfg = json.dumps(_header(model), sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(cfg)), cfg]
    tensors = _tensors(model)
    parts.append(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr, dtype="<f8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes(order="C"))
    return b"".join(parts)


def save_checkpoint(model: Model, path: PathLike) -> None:
    Path(path).write_bytes(dumps(model))


class _Reader:
    def __init__(self, data: bytes, source: str):
        self.data, self.pos, self.source = data, 0, source

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.source}: truncated while reading {what}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def _build(kind: str, config: dict, source: str) -> Model:
    try:
        if kind == "cct":
            return CctModel(CctConfig.from_dict(config))
        if kind == "cnn":
            return CnnModel(CnnConfig.from_dict(config))
        if kind in ("logistic", "svm"):
            cfg = dict(config)
            n = int(cfg.pop("n_features"))
            return LinearModel(np.zeros(n), 0.0, kind, LinearHyperparams(**cfg))
    except (TypeError, ValueError) as e:
        raise CheckpointError(f"{source}: bad config block: {e}") from e
    raise CheckpointError(f"{source}: unknown model kind {kind!r}")


def loads(data: bytes, source: str = "<bytes>") -> Model:
    r = _Reader(data, source)
    if r.take(4, "magic") != MAGIC:
        raise CheckpointError(f"{source}: bad magic, not a checkpoint")
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise CheckpointError(f"{source}: unsupported checkpoint version {version}")
    (n_cfg,) = r.unpack("<I", "config length")
    try:
        header = json.loads(r.take(n_cfg, "config").decode("utf-8"))
        kind, config = header["kind"], header["config"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as e:
        raise CheckpointError(f"{source}: unreadable config block ({e})") from e
    model = _build(kind, config, source)
    expected = {k: np.shape(v) for k, v in _tensors(model).items()}
    (count,) = r.unpack("<I", "tensor count")
    values: dict[str, np.ndarray] = {}
    for _ in range(count):
        (n_name,) = r.unpack("<H", "tensor name length")
        name = r.take(n_name, "tensor name").decode("utf-8")
        (ndim,) = r.unpack("<B", f"{name}: rank")
        shape = r.unpack(f"<{ndim}I", f"{name}: shape")
        if name not in expected:
            raise CheckpointError(f"{source}: unexpected tensor {name!r}")
        if tuple(shape) != tuple(expected[name]):
            raise CheckpointError(f"{source}: tensor {name!r} has shape {tuple(shape)}, config implies {expected[name]}")
        n = int(np.prod(shape)) if ndim else 1
        values[name] = np.frombuffer(r.take(8 * n, f"{name}: values"), dtype="<f8").reshape(shape).astype(np.float64)
    missing = set(expected) - set(values)
    if missing:
        raise CheckpointError(f"{source}: missing tensors {sorted(missing)}")
    if r.pos != len(data):
        raise CheckpointError(f"{source}: {len(data) - r.pos} trailing bytes")
    if isinstance(model, LinearModel):
        model.weights = values["weights"].copy()
        model.bias = float(values["bias"][0])
    else:
        model.load_state(values)
    return model


def load_checkpoint(path: PathLike) -> Model:
    p = Path(path)
    try:
        data = p.read_bytes()
    except OSError as e:
        raise CheckpointError(f"{p}: {e}") from e
    return loads(data, str(p))
