"""Static word-embedding spaces with exact nearest-neighbor search.

The embedding file format is whitespace-separated text, one word per
line followed by its coordinates. An optional first line holding exactly
two integers (vocabulary size and dimensionality) is detected and
skipped. Search is exact brute force; ties are broken by the lowest
vocabulary index so results are reproducible everywhere.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, FormatError

# Query rows processed per block in batched search, sized to bound the
# (block, vocab, dim) intermediate at ~256 MB of float64.
_BLOCK_ELEMENTS = 32_000_000


@dataclass(frozen=True)
class EmbeddingSpace:
    """Immutable vocabulary plus a dense matrix of row vectors."""

    vocab: list[str]
    vectors: np.ndarray
    duplicates_skipped: int = 0
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        vectors = np.ascontiguousarray(np.asarray(self.vectors, dtype=np.float64))
        if vectors.ndim != 2:
            raise ContractError(f"vectors must be a 2-d matrix, got shape {vectors.shape}")
        if vectors.shape[0] != len(self.vocab):
            raise ContractError(
                f"vocabulary size {len(self.vocab)} does not match "
                f"{vectors.shape[0]} vector rows"
            )
        if vectors.shape[0] == 0 or vectors.shape[1] == 0:
            raise ContractError("embedding space must be non-empty")
        if not np.all(np.isfinite(vectors)):
            raise ContractError("embedding vectors must be finite")
        index: dict[str, int] = {}
        for row, word in enumerate(self.vocab):
            if word in index:
                raise ContractError(f"duplicate vocabulary entry {word!r}")
            index[word] = row
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "index", index)

    def __len__(self) -> int:
        return len(self.vocab)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def lookup(self, word: str) -> np.ndarray:
        """Vector for `word`; raises KeyError if absent."""
        return self.vectors[self.index[word]]


def load_embeddings(path: str | os.PathLike[str], lowercase: bool = False) -> EmbeddingSpace:
    """Parse a whitespace text embedding file into an EmbeddingSpace.

    With `lowercase`, words are case-folded and the first occurrence of a
    folded form wins; skipped duplicates are counted on the result.
    """
    vocab: list[str] = []
    rows: list[list[float]] = []
    seen: dict[str, int] = {}
    duplicates = 0
    dim: int | None = None

    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            parts = line.split()
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2 and _is_int(parts[0]) and _is_int(parts[1]):
                continue  # vocab-size/dim header
            word, coords = parts[0], parts[1:]
            if not coords:
                raise FormatError(f"line {lineno}: no coordinates for word {word!r}")
            if dim is None:
                dim = len(coords)
            elif len(coords) != dim:
                raise FormatError(
                    f"line {lineno}: expected {dim} coordinates, found {len(coords)}"
                )
            try:
                values = [float(c) for c in coords]
            except ValueError as exc:
                raise FormatError(f"line {lineno}: unparsable coordinate ({exc})") from None
            if not all(np.isfinite(values)):
                raise FormatError(f"line {lineno}: non-finite coordinate")
            if lowercase:
                word = word.lower()
            if word in seen:
                duplicates += 1
                continue
            seen[word] = len(vocab)
            vocab.append(word)
            rows.append(values)

    if not vocab:
        raise FormatError(f"{path}: no embedding rows found")
    return EmbeddingSpace(vocab, np.asarray(rows, dtype=np.float64), duplicates)


def _is_int(token: str) -> bool:
    try:
        int(token)
    except ValueError:
        return False
    return True


def _check_query(query: np.ndarray, space: EmbeddingSpace) -> np.ndarray:
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (space.dim,):
        raise ContractError(f"query has shape {query.shape}, expected ({space.dim},)")
    if not np.all(np.isfinite(query)):
        raise ContractError("query vector must be finite")
    return query


def nearest_neighbor(query: np.ndarray, space: EmbeddingSpace) -> str:
    """Word minimizing Euclidean distance to `query` (ties: lowest index)."""
    query = _check_query(query, space)
    diff = space.vectors - query[None, :]
    sq = np.add.reduce(diff * diff, axis=1)
    return space.vocab[int(np.argmin(sq))]


def k_nearest(query: np.ndarray, k: int, space: EmbeddingSpace) -> list[tuple[str, float]]:
    """k closest words, ascending by distance then by vocabulary index."""
    if not 1 <= k <= len(space):
        raise ContractError(f"k={k} out of range [1, {len(space)}]")
    query = _check_query(query, space)
    diff = space.vectors - query[None, :]
    sq = np.add.reduce(diff * diff, axis=1)
    order = np.argsort(sq, kind="stable")[:k]
    return [(space.vocab[int(i)], float(np.sqrt(sq[i]))) for i in order]


def nearest_index_batch(queries: np.ndarray, space: EmbeddingSpace) -> np.ndarray:
    """Row indices of the nearest vocabulary vector for each query row.

    Identical to repeated `nearest_neighbor` calls (same arithmetic, same
    tie-break), but evaluated in blocks.
    """
    queries = np.asarray(queries, dtype=np.float64)
    if queries.ndim != 2 or queries.shape[1] != space.dim:
        raise ContractError(f"queries must have shape (n, {space.dim})")
    if not np.all(np.isfinite(queries)):
        raise ContractError("query vectors must be finite")
    block = max(1, _BLOCK_ELEMENTS // (len(space) * space.dim))
    out = np.empty(queries.shape[0], dtype=np.intp)
    for start in range(0, queries.shape[0], block):
        chunk = queries[start : start + block]
        diff = chunk[:, None, :] - space.vectors[None, :, :]
        sq = np.add.reduce(diff * diff, axis=2)
        out[start : start + len(chunk)] = np.argmin(sq, axis=1)
    return out
