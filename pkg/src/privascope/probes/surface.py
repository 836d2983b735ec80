"""Surface-property datasets: sentence length, word content, word order.

Sentence features come from the probed layer; the word features used by
the content and order tasks come from layer 0, the lexical layer, so the
probe has to read the property out of the sentence vector rather than
comparing two contextual vectors.
"""

from __future__ import annotations

import numpy as np

from ..activations import ActivationDump, pool_sentence, pool_subwords
from ..errors import ContractError, DataError
from ..rng import substream
from .classifier import ProbeDataset

# half-open subword-count bins; index = number of edges <= T
LENGTH_BIN_EDGES = (35, 41, 46, 52)
LENGTH_BIN_NAMES = ("[0,35)", "[35,41)", "[41,46)", "[46,52)", "[52,inf)")


def length_bin(subword_count: int) -> int:
    """Bin index for a sentence of `subword_count` subword tokens."""
    if subword_count < 0:
        raise ContractError(f"negative subword count {subword_count}")
    return int(np.searchsorted(LENGTH_BIN_EDGES, subword_count, side="right"))


def _layer_reps(dump: ActivationDump, layer: int):
    if not 0 <= layer < dump.num_layers:
        raise ContractError(f"layer {layer} out of range [0, {dump.num_layers})")
    if not dump.sentences:
        raise ContractError("dump has no sentences")
    word_reps = [pool_subwords(rec, layer) for rec in dump.sentences]
    sentence_reps = [pool_sentence(w) for w in word_reps]
    return word_reps, sentence_reps


def build_length_task(
    dump: ActivationDump, layer: int, rng: np.random.Generator | None = None
) -> ProbeDataset:
    """Balanced 5-class dataset: sentence rep -> subword-count bin.

    Every bin is downsampled to the size of the smallest bin; the
    selection is drawn from `rng` (a fixed default stream when omitted).
    """
    if rng is None:
        rng = substream(0, "length-task")
    _, sentence_reps = _layer_reps(dump, layer)
    bins = np.array([length_bin(rec.num_subwords) for rec in dump.sentences])
    occupancy = {b: int(np.sum(bins == b)) for b in range(len(LENGTH_BIN_NAMES))}
    if min(occupancy.values()) == 0:
        raise DataError(f"every length bin needs sentences; occupancy {occupancy}")
    floor = min(occupancy.values())
    keep: list[np.ndarray] = []
    for b in range(len(LENGTH_BIN_NAMES)):
        members = np.flatnonzero(bins == b)
        chosen = rng.choice(members, size=floor, replace=False)
        keep.append(np.sort(chosen))
    indices = np.concatenate(keep)
    return ProbeDataset(
        features=np.stack([sentence_reps[i] for i in indices]),
        labels=bins[indices],
        num_classes=len(LENGTH_BIN_NAMES),
        label_names=LENGTH_BIN_NAMES,
    )


def build_content_task(
    dump: ActivationDump,
    layer: int,
    negatives_per_positive: int = 1,
    rng: np.random.Generator | None = None,
) -> ProbeDataset:
    """Binary task: does this word occur in this sentence?

    Positive examples pair a sentence with each of its words; negatives
    draw word occurrences from other sentences, rejecting draws whose
    word string appears in the sentence. Features concatenate the
    sentence representation with the word's layer-0 representation.
    """
    if negatives_per_positive < 1:
        raise ContractError("negatives_per_positive must be >= 1")
    if rng is None:
        rng = substream(0, "content-task")
    lexical_reps, _ = _layer_reps(dump, 0)
    _, sentence_reps = _layer_reps(dump, layer)

    occurrences = [
        (s, w)
        for s, rec in enumerate(dump.sentences)
        for w in range(rec.num_words)
    ]
    features: list[np.ndarray] = []
    labels: list[int] = []
    for s, rec in enumerate(dump.sentences):
        present = set(rec.words)
        for w in range(rec.num_words):
            features.append(np.concatenate([sentence_reps[s], lexical_reps[s][w]]))
            labels.append(1)
            for _ in range(negatives_per_positive):
                for _attempt in range(1000):
                    os_, ow = occurrences[int(rng.integers(len(occurrences)))]
                    if os_ != s and dump.sentences[os_].words[ow] not in present:
                        break
                else:
                    raise DataError(
                        "could not draw a negative word absent from the sentence; "
                        "vocabulary too small"
                    )
                features.append(
                    np.concatenate([sentence_reps[s], lexical_reps[os_][ow]])
                )
                labels.append(0)
    return ProbeDataset(
        features=np.stack(features),
        labels=np.array(labels),
        num_classes=2,
        label_names=("absent", "present"),
    )


def build_order_task(
    dump: ActivationDump,
    layer: int,
    pairs_per_sentence: int = 4,
    rng: np.random.Generator | None = None,
) -> ProbeDataset:
    """Binary task: of two words shown in random order, which came first?

    Label 0 means the first-presented word precedes the second in the
    sentence. Sentences with fewer than 2 words contribute nothing.
    """
    if pairs_per_sentence < 1:
        raise ContractError("pairs_per_sentence must be >= 1")
    if rng is None:
        rng = substream(0, "order-task")
    lexical_reps, _ = _layer_reps(dump, 0)
    _, sentence_reps = _layer_reps(dump, layer)

    features: list[np.ndarray] = []
    labels: list[int] = []
    for s, rec in enumerate(dump.sentences):
        if rec.num_words < 2:
            continue
        for _ in range(pairs_per_sentence):
            i, j = sorted(rng.choice(rec.num_words, size=2, replace=False).tolist())
            first, second, label = (i, j, 0) if rng.random() < 0.5 else (j, i, 1)
            features.append(
                np.concatenate(
                    [sentence_reps[s], lexical_reps[s][first], lexical_reps[s][second]]
                )
            )
            labels.append(label)
    if not features:
        raise DataError("no sentence has 2 or more words")
    return ProbeDataset(
        features=np.stack(features),
        labels=np.array(labels),
        num_classes=2,
        label_names=("first-precedes-second", "second-precedes-first"),
    )
