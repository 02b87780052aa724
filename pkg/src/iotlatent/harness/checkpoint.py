"""Versioned binary checkpoints for the three model families.

Layout (all integers little-endian)::

    b"IOTLCK" | u8 version | u16 len, tag | u32 len, config JSON
    | u32 count | count x (u16 len, name | u8 ndim | ndim x u32 dim | float64 values)
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..classifiers import ClassifierModel
from ..numcore import ParamModel
from ..vae import VaeModel
from ..vit import VitModel

MAGIC = b"IOTLCK"
VERSION = 1
MODEL_TYPES: dict[str, type[ParamModel]] = {
    "vae": VaeModel,
    "vit": VitModel,
    "classifier": ClassifierModel,
}


class CheckpointError(ValueError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class CheckpointTagError(CheckpointError):
    pass


def _pack_str(fmt: str, text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack(fmt, len(raw)) + raw


def checkpoint_bytes(model: ParamModel) -> bytes:
    if model.kind not in MODEL_TYPES:
        raise CheckpointTagError(f"unknown model kind {model.kind!r}")
    parts = [MAGIC, struct.pack("<B", VERSION), _pack_str("<H", model.kind),
             _pack_str("<I", json.dumps(model.config, sort_keys=True)),
             struct.pack("<I", len(model.params))]
    for name, arr in model.params.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        parts.append(_pack_str("<H", name))
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def save_checkpoint(model: ParamModel, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(model))


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.raw):
            raise CorruptCheckpointError("checkpoint is truncated")
        out = self.raw[self.off:self.off + n]
        self.off += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self, fmt: str) -> str:
        (n,) = self.unpack(fmt)
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError:
            raise CorruptCheckpointError("undecodable string in checkpoint") from None


def checkpoint_from_bytes(raw: bytes, expected_kind: str | None = None) -> ParamModel:
    rd = _Reader(raw)
    if rd.take(len(MAGIC)) != MAGIC:
        raise CorruptCheckpointError("not a checkpoint file")
    (version,) = rd.unpack("<B")
    if version != VERSION:
        raise CheckpointError(f"checkpoint version {version} unsupported (expected {VERSION})")
    tag = rd.string("<H")
    if tag not in MODEL_TYPES:
        raise CheckpointTagError(f"unknown model tag {tag!r}")
    if expected_kind is not None and tag != expected_kind:
        raise CheckpointTagError(f"checkpoint holds a {tag!r} model, expected {expected_kind!r}")
    try:
        config = json.loads(rd.string("<I"))
    except json.JSONDecodeError:
        raise CorruptCheckpointError("config block is not valid JSON") from None
    (count,) = rd.unpack("<I")
    params = {}
    for _ in range(count):
        name = rd.string("<H")
        (ndim,) = rd.unpack("<B")
        shape = rd.unpack(f"<{ndim}I") if ndim else ()
        size = int(np.prod(shape)) if shape else 1
        params[name] = np.frombuffer(rd.take(8 * size), dtype="<f8").astype(np.float64).reshape(shape)
    if rd.off != len(raw):
        raise CorruptCheckpointError("trailing bytes after parameter blocks")
    return MODEL_TYPES[tag](config, params)


def load_checkpoint(path, expected_kind: str | None = None) -> ParamModel:
    return checkpoint_from_bytes(Path(path).read_bytes(), expected_kind)
