"""Representational similarity analysis.

Two representation spaces are compared indirectly: each is collapsed to a
pairwise cosine-dissimilarity matrix over the same sentences, and the
flattened upper triangulars (diagonal excluded) of the two matrices are
rank-correlated. The result is invariant under per-space orthogonal
transforms and positive rescaling, which is what makes spaces of unequal
dimensionality comparable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .activations import ActivationDump, pool_sentence, pool_subwords
from .errors import AlignmentError, ContractError, DataError


@dataclass(frozen=True)
class DissimilarityMatrix:
    """Symmetric cosine-dissimilarity matrix with zero diagonal."""

    n: int
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if v.shape != (self.n, self.n):
            raise ContractError(f"values shape {v.shape}, expected ({self.n}, {self.n})")
        if not np.array_equal(v, v.T):
            raise ContractError("dissimilarity matrix must be symmetric")
        if np.any(np.diag(v) != 0.0):
            raise ContractError("diagonal must be exactly zero")
        if v.min() < 0.0 or v.max() > 2.0:
            raise ContractError(
                f"entries must lie in [0,2], found [{v.min()}, {v.max()}]"
            )

    def upper_triangular(self) -> np.ndarray:
        """Flattened strict upper triangle, row-major."""
        return self.values[np.triu_indices(self.n, k=1)]


def dissimilarity_matrix(reps: np.ndarray) -> DissimilarityMatrix:
    """1 - cosine similarity for every row pair of an (N, d) matrix."""
    reps = np.asarray(reps, dtype=np.float64)
    if reps.ndim != 2 or reps.shape[0] < 2:
        raise ContractError(f"need an (N>=2, d) matrix, got shape {reps.shape}")
    if not np.all(np.isfinite(reps)):
        raise ContractError("representations must be finite")
    norms = np.linalg.norm(reps, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DataError(f"row {int(zero[0])} has zero norm; cosine undefined")
    unit = reps / norms[:, None]
    dis = np.clip(1.0 - unit @ unit.T, 0.0, 2.0)
    # mirror the upper triangle so symmetry is exact, not just numerical
    upper = np.triu(dis, k=1)
    return DissimilarityMatrix(reps.shape[0], upper + upper.T)


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """Fractional ranks (1-based); tied values share their average rank."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x), dtype=np.float64)
    sorted_x = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x: np.ndarray, y: np.ndarray) -> float:
    """Rank correlation: Pearson correlation of average-tie ranks."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape or len(x) < 2:
        raise ContractError(
            f"need two equal-length vectors of size >= 2, got {x.shape} and {y.shape}"
        )
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ContractError("inputs must be finite")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise DataError("correlation undefined for a constant vector")
    rx = _average_ranks(x) - _average_ranks(x).mean()
    ry = _average_ranks(y) - _average_ranks(y).mean()
    return float((rx @ ry) / np.sqrt((rx @ rx) * (ry @ ry)))


def _check_aligned(a: ActivationDump, b: ActivationDump) -> None:
    if len(a) != len(b):
        raise AlignmentError(f"dumps hold {len(a)} and {len(b)} sentences")
    for i, (ra, rb) in enumerate(zip(a.sentences, b.sentences)):
        if ra.words != rb.words:
            raise AlignmentError(
                f"sentence {i}: word sequences differ "
                f"({ra.words[:5]}... vs {rb.words[:5]}...)"
            )


def rsa_score(dump_a: ActivationDump, dump_b: ActivationDump, layer: int) -> float:
    """Rank correlation of the two dumps' sentence-dissimilarity structure.

    Sentence representations are mean-pooled words (which are mean-pooled
    subwords) at `layer`, taken independently in each dump; hidden sizes
    may differ.
    """
    _check_aligned(dump_a, dump_b)
    for name, dump in (("first", dump_a), ("second", dump_b)):
        if not 0 <= layer < dump.num_layers:
            raise ContractError(
                f"layer {layer} out of range [0, {dump.num_layers}) in {name} dump"
            )
    if len(dump_a) < 3:
        raise ContractError("need at least 3 sentences to correlate dissimilarities")
    vecs = []
    for dump in (dump_a, dump_b):
        reps = np.stack(
            [pool_sentence(pool_subwords(rec, layer)) for rec in dump.sentences]
        )
        vecs.append(dissimilarity_matrix(reps).upper_triangular())
    return spearman(vecs[0], vecs[1])


def rsa_profile(
    dump_a: ActivationDump, dump_b: ActivationDump
) -> list[tuple[int, float]]:
    """rsa_score at every layer, lexical layer 0 first."""
    if dump_a.num_layers != dump_b.num_layers:
        raise AlignmentError(
            f"dumps have {dump_a.num_layers} and {dump_b.num_layers} layers"
        )
    return [
        (layer, rsa_score(dump_a, dump_b, layer))
        for layer in range(dump_a.num_layers)
    ]
