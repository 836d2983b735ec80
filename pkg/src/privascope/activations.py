"""Binary activation-dump format and representation pooling.

A dump stores, per sentence, the subword tokens, the word strings, the
subword span of each word, per-layer activations (layer 0 is the lexical
embedding layer, before any mixing), and optionally per-layer per-head
attention maps. The on-disk layout is little-endian: magic "ACTV",
u32 version=1, u32 num_layers, u32 hidden_dim, u32 num_heads, u32
num_sentences; then per sentence u32 T, u32 W, T length-prefixed (u16)
UTF-8 subwords, W length-prefixed words, W (u32 start, u32 end) spans,
float32 activations in [layer][token][dim] order and, when num_heads > 0,
float32 attentions in [layer][head][from][to] order.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DataError, FormatError

MAGIC = b"ACTV"
VERSION = 1

ATTENTION_ROW_TOL = 1e-5


def _as_plane(values, dtype=np.float32) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(values), dtype=dtype)


@dataclass(frozen=True)
class SentenceRecord:
    """One sentence's tokens, word segmentation, and model internals."""

    subword_tokens: list[str]
    words: list[str]
    word_spans: list[tuple[int, int]]
    activations: np.ndarray  # (L, T, d) float32
    attentions: np.ndarray | None = None  # (L, H, T, T) float32

    def __post_init__(self) -> None:
        object.__setattr__(self, "activations", _as_plane(self.activations))
        if self.attentions is not None:
            object.__setattr__(self, "attentions", _as_plane(self.attentions))
        t = len(self.subword_tokens)
        w = len(self.words)
        if t < 1:
            raise ContractError("sentence has no subword tokens")
        if w != len(self.word_spans):
            raise ContractError(
                f"{w} words but {len(self.word_spans)} spans"
            )
        if self.activations.ndim != 3 or self.activations.shape[1] != t:
            raise ContractError(
                f"activations shape {self.activations.shape}, expected (L, {t}, d)"
            )
        if not np.all(np.isfinite(self.activations)):
            raise ContractError("activations contain non-finite values")
        cursor = 0
        for k, (start, end) in enumerate(self.word_spans):
            if start != cursor or end <= start:
                raise ContractError(
                    f"word span {k} is ({start},{end}); spans must be sorted, "
                    f"non-overlapping, and cover [0,{t}) without gaps"
                )
            cursor = end
        if cursor != t:
            raise ContractError(
                f"word spans cover [0,{cursor}) but there are {t} subword tokens"
            )
        if self.attentions is not None:
            a = self.attentions
            expected = (self.num_layers, a.shape[1], t, t)
            if a.ndim != 4 or a.shape != expected:
                raise ContractError(
                    f"attentions shape {a.shape}, expected {expected}"
                )
            if not np.all(np.isfinite(a)):
                raise ContractError("attentions contain non-finite values")
            row_sums = a.sum(axis=3)
            worst = float(np.max(np.abs(row_sums - 1.0)))
            if worst > ATTENTION_ROW_TOL:
                raise ContractError(
                    f"attention rows must sum to 1 +/- {ATTENTION_ROW_TOL}; "
                    f"worst deviation {worst:.2e}"
                )

    @property
    def num_subwords(self) -> int:
        return len(self.subword_tokens)

    @property
    def num_words(self) -> int:
        return len(self.words)

    @property
    def num_layers(self) -> int:
        return int(self.activations.shape[0])


@dataclass(frozen=True)
class ActivationDump:
    """A corpus of SentenceRecords with uniform layer/dim/head counts."""

    num_layers: int
    hidden_dim: int
    num_heads: int
    sentences: list[SentenceRecord] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.num_layers < 1 or self.hidden_dim < 1 or self.num_heads < 0:
            raise ContractError(
                f"bad dimensions: layers={self.num_layers} "
                f"dim={self.hidden_dim} heads={self.num_heads}"
            )
        for i, rec in enumerate(self.sentences):
            shape = rec.activations.shape
            if shape[0] != self.num_layers or shape[2] != self.hidden_dim:
                raise ContractError(
                    f"sentence {i}: activations shape {shape} does not match "
                    f"dump (L={self.num_layers}, d={self.hidden_dim})"
                )
            if self.num_heads == 0:
                if rec.attentions is not None:
                    raise ContractError(
                        f"sentence {i}: attention present but dump has num_heads=0"
                    )
            else:
                if rec.attentions is None:
                    raise ContractError(
                        f"sentence {i}: attention missing (dump has "
                        f"num_heads={self.num_heads})"
                    )
                if rec.attentions.shape[1] != self.num_heads:
                    raise ContractError(
                        f"sentence {i}: {rec.attentions.shape[1]} heads, "
                        f"expected {self.num_heads}"
                    )

    def __len__(self) -> int:
        return len(self.sentences)


def _encode_string(text: str) -> bytes:
    raw = text.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ContractError(f"string too long for the format: {len(raw)} bytes")
    return struct.pack("<H", len(raw)) + raw


def write_dump(dump: ActivationDump, path: str | os.PathLike[str]) -> None:
    """Serialize a validated dump; see the module docstring for the layout."""
    with open(path, "wb") as out:
        out.write(MAGIC)
        out.write(
            struct.pack(
                "<5I",
                VERSION,
                dump.num_layers,
                dump.hidden_dim,
                dump.num_heads,
                len(dump.sentences),
            )
        )
        for rec in dump.sentences:
            out.write(struct.pack("<2I", rec.num_subwords, rec.num_words))
            for token in rec.subword_tokens:
                out.write(_encode_string(token))
            for word in rec.words:
                out.write(_encode_string(word))
            for start, end in rec.word_spans:
                out.write(struct.pack("<2I", start, end))
            out.write(rec.activations.astype("<f4", copy=False).tobytes(order="C"))
            if dump.num_heads > 0:
                out.write(rec.attentions.astype("<f4", copy=False).tobytes(order="C"))


class _Cursor:
    """Sequential reader that reports the byte offset of any shortfall."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, count: int, what: str) -> bytes:
        if self.pos + count > len(self.data):
            raise FormatError(
                f"offset {self.pos}: truncated while reading {what} "
                f"(wanted {count} bytes, {len(self.data) - self.pos} left)"
            )
        chunk = self.data[self.pos : self.pos + count]
        self.pos += count
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def string(self, what: str) -> str:
        length = struct.unpack("<H", self.take(2, what + " length"))[0]
        raw = self.take(length, what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"offset {self.pos - length}: bad UTF-8 in {what} ({exc})") from None

    def floats(self, count: int, what: str) -> np.ndarray:
        raw = self.take(4 * count, what)
        return np.frombuffer(raw, dtype="<f4").astype(np.float32)


def read_dump(path: str | os.PathLike[str]) -> ActivationDump:
    """Parse and re-validate a dump written by `write_dump`."""
    with open(path, "rb") as handle:
        cur = _Cursor(handle.read())

    if cur.take(4, "magic") != MAGIC:
        raise FormatError(f"offset 0: bad magic, expected {MAGIC!r}")
    version = cur.u32("version")
    if version != VERSION:
        raise FormatError(f"offset 4: unsupported version {version}")
    num_layers = cur.u32("num_layers")
    hidden_dim = cur.u32("hidden_dim")
    num_heads = cur.u32("num_heads")
    num_sentences = cur.u32("num_sentences")

    sentences: list[SentenceRecord] = []
    for i in range(num_sentences):
        t = cur.u32(f"sentence {i} subword count")
        w = cur.u32(f"sentence {i} word count")
        subwords = [cur.string(f"sentence {i} subword {j}") for j in range(t)]
        words = [cur.string(f"sentence {i} word {j}") for j in range(w)]
        spans = []
        for j in range(w):
            start = cur.u32(f"sentence {i} span {j} start")
            end = cur.u32(f"sentence {i} span {j} end")
            spans.append((start, end))
        acts = cur.floats(
            num_layers * t * hidden_dim, f"sentence {i} activations"
        ).reshape(num_layers, t, hidden_dim)
        attn = None
        if num_heads > 0:
            attn = cur.floats(
                num_layers * num_heads * t * t, f"sentence {i} attentions"
            ).reshape(num_layers, num_heads, t, t)
        try:
            sentences.append(
                SentenceRecord(
                    subword_tokens=subwords,
                    words=words,
                    word_spans=spans,
                    activations=acts,
                    attentions=attn,
                )
            )
        except ContractError as exc:
            raise DataError(f"sentence {i}: {exc}") from None

    if cur.pos != len(cur.data):
        raise FormatError(
            f"offset {cur.pos}: {len(cur.data) - cur.pos} trailing bytes"
        )
    try:
        return ActivationDump(num_layers, hidden_dim, num_heads, sentences)
    except ContractError as exc:
        raise DataError(str(exc)) from None


def pool_subwords(rec: SentenceRecord, layer: int) -> np.ndarray:
    """Per-word representations: mean over each word's subword rows.

    Returns a (W, d) float64 matrix; downstream numerics stay in double
    precision.
    """
    if not 0 <= layer < rec.num_layers:
        raise ContractError(f"layer {layer} out of range [0, {rec.num_layers})")
    plane = np.asarray(rec.activations[layer], dtype=np.float64)
    return np.stack([plane[s:e].mean(axis=0) for s, e in rec.word_spans])


def pool_sentence(word_reps: np.ndarray) -> np.ndarray:
    """Column-wise mean of a (W, d) matrix of word representations."""
    word_reps = np.asarray(word_reps, dtype=np.float64)
    if word_reps.ndim != 2 or word_reps.shape[0] < 1:
        raise ContractError(
            f"word_reps must be a nonempty 2-d matrix, got shape {word_reps.shape}"
        )
    return word_reps.mean(axis=0)


def sentence_representations(dump: ActivationDump, layer: int) -> np.ndarray:
    """(N, d) matrix of pooled sentence representations at one layer."""
    if not 0 <= layer < dump.num_layers:
        raise ContractError(f"layer {layer} out of range [0, {dump.num_layers})")
    if not dump.sentences:
        raise ContractError("dump has no sentences")
    return np.stack(
        [pool_sentence(pool_subwords(rec, layer)) for rec in dump.sentences]
    )
