"""Structural probes: linear maps whose squared norms track tree geometry.

A probe is a matrix B of rank k <= d. The depth probe fits ||B w_i||^2 to
each word's distance from the parse-tree root; the distance probe fits
||B (w_i - w_j)||^2 to the tree path length between word pairs. Both use
an L1 objective minimized by subgradient descent with analytic gradients
(no autodiff); `gradient_check` verifies them against central finite
differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..activations import ActivationDump, pool_subwords
from ..errors import AlignmentError, ContractError, DataError
from ..rng import substream
from ..treebank import ParseTree

DEPTH = "depth"
DISTANCE = "distance"


@dataclass(frozen=True)
class StructuralTrainConfig:
    learning_rate: float = 0.02
    epochs: int = 60
    batch_size: int = 16  # sentences per update
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ContractError(f"bad training config: {self}")


@dataclass(frozen=True)
class StructuralProbeModel:
    """Fitted linear transform B (k x d) for one layer and loss kind."""

    b: np.ndarray
    rank: int
    layer: int
    kind: str
    loss_history: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        b = np.ascontiguousarray(np.asarray(self.b, dtype=np.float64))
        object.__setattr__(self, "b", b)
        if b.ndim != 2 or b.shape[0] != self.rank:
            raise ContractError(f"B has shape {b.shape}, expected ({self.rank}, d)")
        if self.rank > b.shape[1]:
            raise ContractError(f"rank {self.rank} exceeds dimension {b.shape[1]}")
        if not np.all(np.isfinite(b)):
            raise ContractError("B must be finite")
        if self.kind not in (DEPTH, DISTANCE):
            raise ContractError(f"unknown probe kind {self.kind!r}")

    def predict_depths(self, word_reps: np.ndarray) -> np.ndarray:
        """||B w_i||^2 for each word row; nonnegative by construction."""
        x = np.asarray(word_reps, dtype=np.float64) @ self.b.T
        return np.einsum("nk,nk->n", x, x)

    def predict_distances(self, word_reps: np.ndarray) -> np.ndarray:
        """||B (w_i - w_j)||^2 matrix; symmetric with zero diagonal."""
        reps = np.asarray(word_reps, dtype=np.float64)
        diffs = reps[:, None, :] - reps[None, :, :]
        proj = diffs @ self.b.T
        return np.einsum("ijk,ijk->ij", proj, proj)


def depth_loss_and_grad(
    b: np.ndarray, word_reps: np.ndarray, gold_depths: np.ndarray
) -> tuple[float, np.ndarray]:
    """(1/n) sum_i | ||B w_i||^2 - depth_i | and its subgradient in B."""
    n = word_reps.shape[0]
    x = word_reps @ b.T
    residual = np.einsum("nk,nk->n", x, x) - gold_depths
    sign = np.sign(residual)
    loss = float(np.abs(residual).mean())
    grad = (2.0 / n) * (x * sign[:, None]).T @ word_reps
    return loss, grad


def distance_loss_and_grad(
    b: np.ndarray, word_reps: np.ndarray, gold_distances: np.ndarray
) -> tuple[float, np.ndarray]:
    """(1/n^2) sum_ij | ||B(w_i-w_j)||^2 - d_T(i,j) | and its subgradient."""
    n = word_reps.shape[0]
    diffs = word_reps[:, None, :] - word_reps[None, :, :]
    proj = diffs @ b.T
    residual = np.einsum("ijk,ijk->ij", proj, proj) - gold_distances
    sign = np.sign(residual)
    loss = float(np.abs(residual).mean())
    grad = (2.0 / (n * n)) * np.einsum("ijk,ij,ijd->kd", proj, sign, diffs)
    return loss, grad


_LOSSES = {DEPTH: depth_loss_and_grad, DISTANCE: distance_loss_and_grad}


def _check_alignment(dump: ActivationDump, trees: list[ParseTree]) -> None:
    if len(dump.sentences) != len(trees):
        raise AlignmentError(
            f"dump has {len(dump.sentences)} sentences, treebank has {len(trees)}"
        )
    for i, (rec, tree) in enumerate(zip(dump.sentences, trees)):
        if rec.num_words != len(tree):
            raise AlignmentError(
                f"sentence {i}: dump has {rec.num_words} words, tree has {len(tree)}"
            )


def _gold(tree: ParseTree, kind: str) -> np.ndarray:
    if kind == DEPTH:
        return tree.depths().astype(np.float64)
    return tree.distance_matrix().astype(np.float64)


def _train(
    dump: ActivationDump,
    layer: int,
    trees: list[ParseTree],
    k: int,
    kind: str,
    config: StructuralTrainConfig,
    rng: np.random.Generator | None,
) -> StructuralProbeModel:
    _check_alignment(dump, trees)
    if not 0 <= layer < dump.num_layers:
        raise ContractError(f"layer {layer} out of range [0, {dump.num_layers})")
    d = dump.hidden_dim
    if not 1 <= k <= d:
        raise ContractError(f"rank k={k} out of range [1, {d}]")
    if rng is None:
        rng = substream(config.seed, "structural", kind)
    loss_fn = _LOSSES[kind]

    reps = [pool_subwords(rec, layer) for rec in dump.sentences]
    golds = [_gold(tree, kind) for tree in trees]
    count = len(reps)
    b = rng.standard_normal((k, d)) / np.sqrt(d)

    def corpus_loss(mat: np.ndarray) -> float:
        return float(
            np.mean([loss_fn(mat, reps[i], golds[i])[0] for i in range(count)])
        )

    history = [corpus_loss(b)]
    for _ in range(config.epochs):
        order = rng.permutation(count)
        for start in range(0, count, config.batch_size):
            batch = order[start : start + config.batch_size]
            grad = np.zeros_like(b)
            for i in batch:
                grad += loss_fn(b, reps[i], golds[i])[1]
            b = b - (config.learning_rate / len(batch)) * grad
        history.append(corpus_loss(b))

    return StructuralProbeModel(
        b=b, rank=k, layer=layer, kind=kind, loss_history=tuple(history)
    )


def train_depth_probe(
    dump: ActivationDump,
    layer: int,
    trees: list[ParseTree],
    k: int,
    config: StructuralTrainConfig | None = None,
    rng: np.random.Generator | None = None,
) -> StructuralProbeModel:
    """Fit ||B w||^2 to root distance by subgradient descent."""
    return _train(dump, layer, trees, k, DEPTH, config or StructuralTrainConfig(), rng)


def train_distance_probe(
    dump: ActivationDump,
    layer: int,
    trees: list[ParseTree],
    k: int,
    config: StructuralTrainConfig | None = None,
    rng: np.random.Generator | None = None,
) -> StructuralProbeModel:
    """Fit ||B (w_i - w_j)||^2 to tree path lengths by subgradient descent."""
    return _train(
        dump, layer, trees, k, DISTANCE, config or StructuralTrainConfig(), rng
    )


def prim_mst(distances: np.ndarray) -> set[tuple[int, int]]:
    """Minimum spanning tree edges over a symmetric distance matrix.

    Grows from node 0; ties on the next node or a key update resolve to
    the lowest index / the earlier parent, so the edge set is
    deterministic.
    """
    distances = np.asarray(distances, dtype=np.float64)
    n = distances.shape[0]
    if distances.shape != (n, n) or n < 1:
        raise ContractError(f"need a square matrix, got {distances.shape}")
    if n == 1:
        return set()
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    key = distances[0].copy()
    parent = np.zeros(n, dtype=np.intp)
    edges: set[tuple[int, int]] = set()
    for _ in range(n - 1):
        masked = np.where(in_tree, np.inf, key)
        nxt = int(np.argmin(masked))
        edges.add((min(nxt, int(parent[nxt])), max(nxt, int(parent[nxt]))))
        in_tree[nxt] = True
        better = (~in_tree) & (distances[nxt] < key)
        key[better] = distances[nxt][better]
        parent[better] = nxt
    return edges


def eval_depth_probe(
    model: StructuralProbeModel,
    dump: ActivationDump,
    layer: int,
    trees: list[ParseTree],
) -> dict[str, float]:
    """Root accuracy and mean per-sentence depth rank correlation.

    Sentences whose gold depths have fewer than 2 distinct values are
    left out of the Spearman average; a constant prediction vector
    contributes 0.
    """
    _check_alignment(dump, trees)
    root_hits = 0
    rhos: list[float] = []
    for rec, tree in zip(dump.sentences, trees):
        pred = model.predict_depths(pool_subwords(rec, layer))
        if int(np.argmin(pred)) == tree.root:
            root_hits += 1
        gold = tree.depths().astype(np.float64)
        if len(np.unique(gold)) < 2:
            continue
        rhos.append(_safe_spearman(pred, gold))
    return {
        "root_accuracy": root_hits / len(trees),
        "mean_spearman": float(np.mean(rhos)) if rhos else float("nan"),
    }


def eval_distance_probe(
    model: StructuralProbeModel,
    dump: ActivationDump,
    layer: int,
    trees: list[ParseTree],
    exclude_punct: bool = True,
) -> dict[str, float]:
    """UUAS of the predicted-distance MST plus mean rank correlation.

    With `exclude_punct`, words tagged PUNCT are dropped before both
    metrics; gold edges are then word pairs at tree distance 1 among the
    remaining words. UUAS divides by n-1 for n retained words, so a
    sentence whose punctuation was internal to the tree caps below 1.
    """
    _check_alignment(dump, trees)
    uuas_values: list[float] = []
    rhos: list[float] = []
    for rec, tree in zip(dump.sentences, trees):
        keep = [
            i
            for i in range(len(tree))
            if not (exclude_punct and tree.upos[i] == "PUNCT")
        ]
        if len(keep) < 2:
            continue
        reps = pool_subwords(rec, layer)[keep]
        pred = model.predict_distances(reps)
        gold = tree.distance_matrix()[np.ix_(keep, keep)].astype(np.float64)
        gold_edges = {
            (i, j)
            for i in range(len(keep))
            for j in range(i + 1, len(keep))
            if gold[i, j] == 1
        }
        mst = prim_mst(pred)
        uuas_values.append(len(mst & gold_edges) / (len(keep) - 1))
        if len(keep) >= 3:
            iu = np.triu_indices(len(keep), k=1)
            rhos.append(_safe_spearman(pred[iu], gold[iu]))
    return {
        "uuas": float(np.mean(uuas_values)) if uuas_values else float("nan"),
        "mean_spearman": float(np.mean(rhos)) if rhos else float("nan"),
    }


def _safe_spearman(pred: np.ndarray, gold: np.ndarray) -> float:
    from ..rsa import spearman

    try:
        return spearman(pred, gold)
    except DataError:
        return 0.0  # constant predictions carry no ordering information


def gradient_check(
    kind: str,
    model: StructuralProbeModel,
    batch: tuple[np.ndarray, np.ndarray],
    delta: float = 1e-4,
    negate_analytic: bool = False,
) -> float:
    """Max relative error of the analytic gradient vs central differences.

    The L1 loss is non-differentiable where a prediction crosses its
    target, so batches with any |prediction - gold| < 10*delta are
    refused; callers re-sample. `negate_analytic` flips the analytic
    gradient's sign, a self-test hook that should drive the error to ~2.
    """
    if kind not in _LOSSES:
        raise ContractError(f"unknown probe kind {kind!r}")
    word_reps, gold = batch
    word_reps = np.asarray(word_reps, dtype=np.float64)
    gold = np.asarray(gold, dtype=np.float64)
    loss_fn = _LOSSES[kind]

    if kind == DEPTH:
        gaps = np.abs(model.predict_depths(word_reps) - gold)
    else:
        off_diag = ~np.eye(len(word_reps), dtype=bool)
        gaps = np.abs(model.predict_distances(word_reps) - gold)[off_diag]
    if np.any(gaps < 10.0 * delta):
        raise DataError("batch too close to an L1 kink; re-sample")

    _, analytic = loss_fn(model.b, word_reps, gold)
    if negate_analytic:
        analytic = -analytic

    worst = 0.0
    b = model.b
    for a in range(b.shape[0]):
        for c in range(b.shape[1]):
            plus = b.copy()
            minus = b.copy()
            plus[a, c] += delta
            minus[a, c] -= delta
            numeric = (
                loss_fn(plus, word_reps, gold)[0]
                - loss_fn(minus, word_reps, gold)[0]
            ) / (2.0 * delta)
            scale = max(abs(numeric), abs(analytic[a, c]))
            if scale < 1e-12:
                continue
            worst = max(worst, abs(numeric - analytic[a, c]) / scale)
    return worst
