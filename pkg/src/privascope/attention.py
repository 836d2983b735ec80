"""Word-level attention maps, head distances, and 2-D head layouts.

Subword attention planes are reassembled at word granularity (columns in
a word's span summed, rows averaged), heads are compared by the mean
Jensen-Shannon divergence of their word-aligned rows, and the resulting
distance matrix is embedded in the plane with classical multidimensional
scaling backed by a hand-rolled cyclic Jacobi eigensolver.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .activations import ActivationDump, SentenceRecord
from .errors import ContractError, DataError

LN2 = math.log(2.0)

__all__ = [
    "LN2",
    "HeadDistanceMatrix",
    "word_align_attention",
    "js_divergence",
    "head_distance_matrix",
    "classical_mds",
    "head_coordinates_csv",
    "head_scatter_svg",
]


def word_align_attention(rec: SentenceRecord, layer: int, head: int) -> np.ndarray:
    """Collapse a subword attention plane to word granularity.

    Attention mass flowing INTO a multi-subword word is summed over its
    span; attention flowing OUT of one is averaged over its span.  Row
    mass is preserved, so the result is again row-stochastic (up to the
    float error already present in the input).
    """
    if rec.attentions is None:
        raise ContractError("sentence record stores no attention")
    num_layers, num_heads = rec.attentions.shape[0], rec.attentions.shape[1]
    if not 0 <= layer < num_layers:
        raise ContractError(f"layer {layer} out of range [0, {num_layers})")
    if not 0 <= head < num_heads:
        raise ContractError(f"head {head} out of range [0, {num_heads})")
    plane = np.asarray(rec.attentions[layer, head], dtype=np.float64)
    if plane.min() < 0.0:
        raise ContractError("attention weights must be nonnegative")
    starts = np.fromiter((s for s, _ in rec.word_spans), dtype=np.intp)
    lengths = np.fromiter((e - s for s, e in rec.word_spans), dtype=np.float64)
    # spans are sorted and cover [0, T), so reduceat segments are exact
    cols = np.add.reduceat(plane, starts, axis=1)
    rows = np.add.reduceat(cols, starts, axis=0) / lengths[:, None]
    return rows


def js_divergence(p, q) -> float:
    """Jensen-Shannon divergence in nats; symmetric, within [0, ln 2]."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.ndim != 1 or q.ndim != 1 or p.shape != q.shape:
        raise ContractError(
            f"distributions must be equal-length vectors, got {p.shape} and {q.shape}"
        )
    if p.min() < 0.0 or q.min() < 0.0:
        raise ContractError("distributions must not contain negative entries")
    for total in (p.sum(), q.sum()):
        if abs(total - 1.0) > 1e-6:
            raise ContractError(f"distribution sums to {total!r}, expected 1 +/- 1e-6")
    p = p / p.sum()
    q = q / q.sum()
    return float(_js_rows(p, q))


def _kl_rows(p: np.ndarray, m: np.ndarray) -> np.ndarray:
    # 0 * log 0 := 0; where p > 0 the mixture m >= p/2 is positive too
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, p * (np.log(p) - np.log(m)), 0.0)
    return terms.sum(axis=-1)


def _js_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    m = 0.5 * (p + q)
    return 0.5 * _kl_rows(p, m) + 0.5 * _kl_rows(q, m)


@dataclass(frozen=True)
class HeadDistanceMatrix:
    """Pairwise head distances; flat head index = layer * heads_per_layer + head."""

    values: np.ndarray
    heads_per_layer: int
    corpus_tokens: int

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ContractError(f"distance matrix shape {values.shape} is not square")
        n = values.shape[0]
        if self.heads_per_layer < 1 or n % self.heads_per_layer:
            raise ContractError(
                f"{n} heads total is not a multiple of "
                f"heads_per_layer={self.heads_per_layer}"
            )
        if self.corpus_tokens < 1:
            raise ContractError("corpus_tokens must be positive")
        if not np.all(np.isfinite(values)):
            raise ContractError("distance matrix contains non-finite values")
        if np.any(values != values.T):
            raise ContractError("distance matrix must be exactly symmetric")
        if np.any(np.diagonal(values) != 0.0):
            raise ContractError("distance matrix diagonal must be zero")
        if values.min() < 0.0 or values.max() > LN2:
            raise ContractError(
                f"distances must lie in [0, ln 2]; found range "
                f"[{values.min()!r}, {values.max()!r}]"
            )

    @property
    def num_heads_total(self) -> int:
        return int(self.values.shape[0])

    @property
    def num_layers(self) -> int:
        return self.num_heads_total // self.heads_per_layer


def _sentence_partial(
    rec: SentenceRecord, num_layers: int, num_heads: int, sentence_mean: bool
) -> tuple[np.ndarray, int]:
    """Upper-triangular JS sums for one sentence, plus how many units they pool."""
    k = num_layers * num_heads
    w = rec.num_words
    aligned = np.empty((k, w, w))
    for layer in range(num_layers):
        for head in range(num_heads):
            aligned[layer * num_heads + head] = word_align_attention(rec, layer, head)
    sums = np.zeros((k, k))
    for a in range(k - 1):
        js = _js_rows(aligned[a][None, :, :], aligned[a + 1 :])
        sums[a, a + 1 :] = js.mean(axis=1) if sentence_mean else js.sum(axis=1)
    return sums, (1 if sentence_mean else w)


def head_distance_matrix(
    dump: ActivationDump,
    *,
    sentence_mean: bool = False,
    threads: int | None = None,
) -> HeadDistanceMatrix:
    """Mean Jensen-Shannon divergence between word-aligned rows of every head pair.

    By default every word position in the corpus contributes one JS term
    per pair; with sentence_mean=True each sentence contributes its own
    row-mean instead, so short and long sentences weigh the same.  The
    per-sentence partial sums are reduced in sentence order, so the result
    is bitwise identical for any thread count.
    """
    if dump.num_heads < 1:
        raise ContractError("dump stores no attention (num_heads is 0)")
    if not dump.sentences:
        raise ContractError("dump contains no sentences")

    def partial(rec: SentenceRecord) -> tuple[np.ndarray, int]:
        return _sentence_partial(rec, dump.num_layers, dump.num_heads, sentence_mean)

    if threads is not None and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            partials = list(pool.map(partial, dump.sentences))
    else:
        partials = [partial(rec) for rec in dump.sentences]

    k = dump.num_layers * dump.num_heads
    sums = np.zeros((k, k))
    count = 0
    for part, units in partials:
        sums += part
        count += units
    values = sums / count
    values = values + values.T  # mirror the strict upper triangle
    np.fill_diagonal(values, 0.0)
    # guard against float dust just outside the mathematical range
    values = np.clip(values, 0.0, LN2)
    return HeadDistanceMatrix(
        values=values, heads_per_layer=dump.num_heads, corpus_tokens=count
    )


def _offdiag_norm(a: np.ndarray) -> float:
    upper = np.triu(a, k=1)
    return float(np.sqrt(2.0 * np.sum(upper * upper)))


def _jacobi_eigh(
    a: np.ndarray, tol: float, max_sweeps: int
) -> tuple[np.ndarray, np.ndarray, float]:
    """Cyclic Jacobi diagonalization of a symmetric matrix.

    Returns (eigenvalues, eigenvector columns, final off-diagonal norm).
    Raises when the off-diagonal Frobenius norm is still at or above tol
    after max_sweeps full sweeps.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n)
    sweeps = 0
    while True:
        residual = _offdiag_norm(a)
        if residual < tol:
            return np.diagonal(a).copy(), v, residual
        if sweeps >= max_sweeps:
            raise DataError(
                f"eigensolver did not converge: off-diagonal norm {residual:.3e} "
                f"after {max_sweeps} sweeps (tolerance {tol:.1e})"
            )
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, tau) / (abs(tau) + math.hypot(tau, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                vec_p, vec_q = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q
        sweeps += 1


def classical_mds(
    distances,
    out_dim: int = 2,
    *,
    tol: float = 1e-10,
    max_sweeps: int = 100,
) -> np.ndarray:
    """Embed a distance matrix into out_dim coordinates (Torgerson scaling).

    Accepts a HeadDistanceMatrix or any symmetric nonnegative matrix with
    a zero diagonal.  The doubly-centered Gram matrix is diagonalized with
    cyclic Jacobi rotations; coordinates are the top eigenvector columns
    scaled by sqrt(max(eigenvalue, 0)).  Each coordinate column is flipped
    so its largest-magnitude entry is positive, which pins the otherwise
    arbitrary reflection.
    """
    if isinstance(distances, HeadDistanceMatrix):
        values = distances.values
    else:
        values = np.asarray(distances, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ContractError(f"distance matrix shape {values.shape} is not square")
        if not np.all(np.isfinite(values)):
            raise ContractError("distance matrix contains non-finite values")
        if np.abs(values - values.T).max() > 1e-9:
            raise ContractError("distance matrix must be symmetric")
        if np.any(np.diagonal(values) != 0.0):
            raise ContractError("distance matrix diagonal must be zero")
        if values.min() < 0.0:
            raise ContractError("distances must be nonnegative")
    if out_dim < 1:
        raise ContractError(f"out_dim must be positive, got {out_dim}")

    n = values.shape[0]
    centering = np.eye(n) - 1.0 / n
    gram = -0.5 * centering @ (values * values) @ centering
    gram = 0.5 * (gram + gram.T)  # restore exact symmetry for the eigensolver
    eigvals, eigvecs, _ = _jacobi_eigh(gram, tol, max_sweeps)
    order = np.argsort(-eigvals, kind="stable")[:out_dim]
    coords = eigvecs[:, order] * np.sqrt(np.maximum(eigvals[order], 0.0))
    for column in range(coords.shape[1]):
        anchor = int(np.argmax(np.abs(coords[:, column])))
        if coords[anchor, column] < 0.0:
            coords[:, column] = -coords[:, column]
    return coords


def head_coordinates_csv(coords: np.ndarray, heads_per_layer: int) -> str:
    """CSV rows (head, layer, x, y) for a head-coordinate matrix."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ContractError(f"expected (n, 2) coordinates, got {coords.shape}")
    if heads_per_layer < 1 or coords.shape[0] % heads_per_layer:
        raise ContractError(
            f"{coords.shape[0]} heads is not a multiple of {heads_per_layer}"
        )
    lines = ["head,layer,x,y"]
    for index, (x, y) in enumerate(coords):
        lines.append(
            f"{index},{index // heads_per_layer},{float(x)!r},{float(y)!r}"
        )
    return "\n".join(lines) + "\n"


_PALETTE = (
    "#4269d0", "#efb118", "#ff725c", "#6cc5b0", "#3ca951", "#ff8ab7",
    "#a463f2", "#97bbf5", "#9c6b4e", "#9498a0", "#e03f3f", "#46b2e0",
)


def head_scatter_svg(
    coords: np.ndarray,
    heads_per_layer: int,
    *,
    size: int = 480,
    margin: float = 48.0,
    radius: float = 5.0,
) -> str:
    """Self-contained SVG scatter of head coordinates, colored by layer."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ContractError(f"expected (n, 2) coordinates, got {coords.shape}")
    if heads_per_layer < 1 or coords.shape[0] % heads_per_layer:
        raise ContractError(
            f"{coords.shape[0]} heads is not a multiple of {heads_per_layer}"
        )
    num_layers = coords.shape[0] // heads_per_layer
    low = coords.min(axis=0)
    high = coords.max(axis=0)
    spread = np.maximum(high - low, 1e-12)
    scale = (size - 2.0 * margin) / spread.max()

    def place(point: np.ndarray) -> tuple[float, float]:
        x = margin + (point[0] - low[0]) * scale
        # SVG y grows downward; flip so larger coordinates sit higher
        y = size - margin - (point[1] - low[1]) * scale
        return x, y

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    for layer in range(num_layers):
        color = _PALETTE[layer % len(_PALETTE)]
        parts.append(
            f'<text x="12" y="{18 + 16 * layer}" font-size="12" '
            f'font-family="sans-serif" fill="{color}">layer {layer}</text>'
        )
    for index, point in enumerate(coords):
        layer, head = divmod(index, heads_per_layer)
        color = _PALETTE[layer % len(_PALETTE)]
        x, y = place(point)
        parts.append(
            f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{radius}" fill="{color}" '
            f'fill-opacity="0.85"><title>layer {layer} head {head}</title></circle>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
