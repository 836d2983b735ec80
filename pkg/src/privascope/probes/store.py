"""Probe model files: magic "PRBE", version, kind byte, dims, float32 weights."""

from __future__ import annotations

import os
import struct

import numpy as np

from ..errors import ContractError, FormatError
from .classifier import ClassifierProbe, TrainConfig
from .structural import DEPTH, DISTANCE, StructuralProbeModel

MAGIC = b"PRBE"
VERSION = 1
_KIND_CLASSIFIER = 1
_KIND_DEPTH = 2
_KIND_DISTANCE = 3


def _pack_floats(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def _pack_text(text: str) -> bytes:
    raw = text.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ContractError(f"label too long: {len(raw)} bytes")
    return struct.pack("<H", len(raw)) + raw


def save_probe(
    model: ClassifierProbe | StructuralProbeModel, path: str | os.PathLike[str]
) -> None:
    with open(path, "wb") as out:
        out.write(MAGIC)
        out.write(struct.pack("<I", VERSION))
        if isinstance(model, StructuralProbeModel):
            kind = _KIND_DEPTH if model.kind == DEPTH else _KIND_DISTANCE
            out.write(struct.pack("<B", kind))
            out.write(
                struct.pack("<3I", model.rank, model.b.shape[1], model.layer)
            )
            out.write(_pack_floats(model.b))
            return
        out.write(struct.pack("<B", _KIND_CLASSIFIER))
        out.write(
            struct.pack(
                "<3I", model.input_dim, model.hidden_dim, model.num_classes
            )
        )
        names = model.label_names or ()
        out.write(struct.pack("<I", len(names)))
        for name in names:
            out.write(_pack_text(name))
        cfg = model.config
        out.write(
            struct.pack(
                "<dIIQd",
                cfg.learning_rate,
                cfg.epochs,
                cfg.batch_size,
                cfg.seed,
                model.final_loss,
            )
        )
        for arr in (model.w_hidden, model.b_hidden, model.w_out, model.b_out):
            out.write(_pack_floats(arr))


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, count: int, what: str) -> bytes:
        if self.pos + count > len(self.data):
            raise FormatError(f"offset {self.pos}: truncated while reading {what}")
        chunk = self.data[self.pos : self.pos + count]
        self.pos += count
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def floats(self, shape: tuple[int, ...], what: str) -> np.ndarray:
        count = int(np.prod(shape)) if shape else 0
        raw = self.take(4 * count, what)
        return np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)


def load_probe(
    path: str | os.PathLike[str],
) -> ClassifierProbe | StructuralProbeModel:
    with open(path, "rb") as handle:
        cur = _Cursor(handle.read())
    if cur.take(4, "magic") != MAGIC:
        raise FormatError("offset 0: bad magic, not a probe file")
    (version,) = cur.unpack("<I", "version")
    if version != VERSION:
        raise FormatError(f"offset 4: unsupported version {version}")
    (kind,) = cur.unpack("<B", "kind")

    if kind in (_KIND_DEPTH, _KIND_DISTANCE):
        rank, dim, layer = cur.unpack("<3I", "dims")
        b = cur.floats((rank, dim), "B matrix")
        return StructuralProbeModel(
            b=b,
            rank=rank,
            layer=layer,
            kind=DEPTH if kind == _KIND_DEPTH else DISTANCE,
        )
    if kind != _KIND_CLASSIFIER:
        raise FormatError(f"unknown probe kind byte {kind}")

    input_dim, hidden_dim, num_classes = cur.unpack("<3I", "dims")
    (name_count,) = cur.unpack("<I", "label name count")
    names = []
    for i in range(name_count):
        (length,) = cur.unpack("<H", f"label {i} length")
        names.append(cur.take(length, f"label {i}").decode("utf-8"))
    lr, epochs, batch, seed, final_loss = cur.unpack("<dIIQd", "config")
    w_hidden = cur.floats((hidden_dim, input_dim), "hidden weights")
    b_hidden = cur.floats((hidden_dim,), "hidden bias")
    w_out = cur.floats((num_classes, hidden_dim or input_dim), "output weights")
    b_out = cur.floats((num_classes,), "output bias")
    return ClassifierProbe(
        input_dim=input_dim,
        hidden_dim=hidden_dim,
        num_classes=num_classes,
        w_hidden=w_hidden,
        b_hidden=b_hidden,
        w_out=w_out,
        b_out=b_out,
        config=TrainConfig(
            learning_rate=lr, epochs=epochs, batch_size=batch,
            hidden_dim=hidden_dim, seed=int(seed),
        ),
        final_loss=final_loss,
        label_names=tuple(names) if names else None,
    )
