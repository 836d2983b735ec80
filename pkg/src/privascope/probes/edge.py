"""Edge probing: classify labeled spans (or span pairs) of a sentence.

A span's representation is the mean of its word representations at the
probed layer; span-pair examples concatenate the two pooled spans. All
examples in one dataset must have the same arity so features stack.
"""

from __future__ import annotations

import numpy as np

from ..activations import ActivationDump, pool_subwords
from ..errors import ContractError, DataError
from ..treebank import SpanExample
from .classifier import ProbeDataset


def _span_rep(word_reps: np.ndarray, span: tuple[int, int], where: str) -> np.ndarray:
    i, j = span
    if j > word_reps.shape[0]:
        raise DataError(
            f"{where}: span ({i},{j}) exceeds {word_reps.shape[0]} words"
        )
    return word_reps[i:j].mean(axis=0)


def build_edge_features(
    dump: ActivationDump, layer: int, examples: list[SpanExample]
) -> ProbeDataset:
    """Assemble a span-classification dataset against a dump."""
    if not examples:
        raise ContractError("no span examples given")
    if not 0 <= layer < dump.num_layers:
        raise ContractError(f"layer {layer} out of range [0, {dump.num_layers})")
    arities = {ex.span2 is None for ex in examples}
    if len(arities) != 1:
        raise DataError("examples mix single-span and two-span records")

    label_names = tuple(sorted({ex.label for ex in examples}))
    label_index = {name: k for k, name in enumerate(label_names)}

    pooled: dict[int, np.ndarray] = {}
    features: list[np.ndarray] = []
    for k, ex in enumerate(examples):
        if ex.sentence_index >= len(dump.sentences):
            raise DataError(
                f"example {k}: sentence index {ex.sentence_index} out of range "
                f"(dump has {len(dump.sentences)} sentences)"
            )
        if ex.sentence_index not in pooled:
            pooled[ex.sentence_index] = pool_subwords(
                dump.sentences[ex.sentence_index], layer
            )
        reps = pooled[ex.sentence_index]
        parts = [_span_rep(reps, ex.span1, f"example {k} span1")]
        if ex.span2 is not None:
            parts.append(_span_rep(reps, ex.span2, f"example {k} span2"))
        features.append(np.concatenate(parts))

    return ProbeDataset(
        features=np.stack(features),
        labels=np.array([label_index[ex.label] for ex in examples]),
        num_classes=len(label_names),
        label_names=label_names,
    )
