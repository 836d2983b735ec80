"""Shared synthetic-corpus builders for the test suite."""

import numpy as np
import pytest

from privascope.activations import ActivationDump, SentenceRecord
from privascope.treebank import ParseTree


def single_word_record(layer_vectors):
    """One word, one subword; layer_vectors is (L, d)."""
    layer_vectors = np.asarray(layer_vectors, dtype=np.float32)
    layers, dim = layer_vectors.shape
    return SentenceRecord(
        subword_tokens=["t0"],
        words=["w0"],
        word_spans=[(0, 1)],
        activations=layer_vectors.reshape(layers, 1, dim),
    )


def word_reps_record(reps, words=None, layers=1):
    """Each word is its own subword; reps is (n, d), copied to every layer."""
    reps = np.asarray(reps, dtype=np.float32)
    n, dim = reps.shape
    if words is None:
        words = [f"w{i}" for i in range(n)]
    acts = np.repeat(reps.reshape(1, n, dim), layers, axis=0)
    return SentenceRecord(
        subword_tokens=[f"t{i}" for i in range(n)],
        words=list(words),
        word_spans=[(i, i + 1) for i in range(n)],
        activations=acts,
    )


def random_tree(n, rng):
    """Random attachment tree over n words, root at a random position."""
    parents = [0] + [int(rng.integers(0, i)) for i in range(1, n)]
    node_to_pos = np.empty(n, dtype=int)
    node_to_pos[rng.permutation(n)] = np.arange(n)
    heads = [0] * n
    for node in range(1, n):
        heads[int(node_to_pos[node])] = int(node_to_pos[parents[node]]) + 1
    heads[int(node_to_pos[0])] = 0
    return ParseTree([f"w{i}" for i in range(n)], heads, ["X"] * n)


def tree_coded_vectors(tree, dim, noise=0.0, rng=None):
    """Path-indicator encoding: coordinate u is 1 iff u lies on the word's
    root path (root excluded), so squared Euclidean distances equal tree
    distances and squared norms equal depths."""
    n = len(tree)
    if n > dim:
        raise ValueError(f"need dim >= {n}")
    vec = np.zeros((n, dim))
    for w in range(n):
        node = w
        while tree.heads[node] != 0:
            vec[w, node] = 1.0
            node = tree.heads[node] - 1
    if noise:
        vec = vec + noise * rng.standard_normal((n, dim))
    return vec


def tree_coded_corpus(num_sentences, dim, rng, noise=0.0, min_words=5):
    """Tree-coded dump + aligned trees; sentence lengths in [min_words, dim]."""
    records, trees = [], []
    for _ in range(num_sentences):
        n = int(rng.integers(min_words, dim + 1))
        tree = random_tree(n, rng)
        reps = tree_coded_vectors(tree, dim, noise, rng)
        records.append(word_reps_record(reps, words=tree.words))
        trees.append(tree)
    return ActivationDump(1, dim, 0, records), trees


@pytest.fixture
def small_tree_corpus():
    rng = np.random.default_rng(42)
    return tree_coded_corpus(60, 10, rng)
