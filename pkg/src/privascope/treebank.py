"""Dependency-tree reading and labeled span tasks.

CoNLL-U input follows the 10-column standard; multiword-token range lines
(IDs like "3-4") and empty nodes (IDs like "5.1") are skipped, as are
comments. Sentences whose HEAD column does not form a single rooted tree
are dropped and counted rather than aborting the whole file.
"""

from __future__ import annotations

import json
import os
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, FormatError


@dataclass(frozen=True)
class ParseTree:
    """One sentence's dependency structure.

    `heads[i]` is the 1-based index of word i's head, 0 for the root.
    """

    words: list[str]
    heads: list[int]
    upos: list[str]

    def __post_init__(self) -> None:
        n = len(self.words)
        if n < 1:
            raise ContractError("tree has no words")
        if len(self.heads) != n or len(self.upos) != n:
            raise ContractError(
                f"field lengths differ: {n} words, {len(self.heads)} heads, "
                f"{len(self.upos)} tags"
            )
        problem = _tree_violation(self.heads)
        if problem:
            raise ContractError(problem)

    def __len__(self) -> int:
        return len(self.words)

    @property
    def root(self) -> int:
        """0-based index of the root word."""
        return self.heads.index(0)

    def depths(self) -> np.ndarray:
        """Edge count from each word up to the root (root depth 0)."""
        n = len(self.words)
        out = np.empty(n, dtype=np.int64)
        for i in range(n):
            depth = 0
            node = i
            while self.heads[node] != 0:
                node = self.heads[node] - 1
                depth += 1
            out[i] = depth
        return out

    def distance_matrix(self) -> np.ndarray:
        """n x n matrix of path lengths between words in the tree."""
        n = len(self.words)
        adjacency: list[list[int]] = [[] for _ in range(n)]
        for child, head in enumerate(self.heads):
            if head != 0:
                adjacency[child].append(head - 1)
                adjacency[head - 1].append(child)
        out = np.zeros((n, n), dtype=np.int64)
        for source in range(n):
            seen = np.full(n, -1, dtype=np.int64)
            seen[source] = 0
            queue = deque([source])
            while queue:
                node = queue.popleft()
                for neighbor in adjacency[node]:
                    if seen[neighbor] < 0:
                        seen[neighbor] = seen[node] + 1
                        queue.append(neighbor)
            out[source] = seen
        return out

    def edges(self) -> set[tuple[int, int]]:
        """Undirected edges as sorted 0-based index pairs."""
        return {
            (min(child, head - 1), max(child, head - 1))
            for child, head in enumerate(self.heads)
            if head != 0
        }


def _tree_violation(heads: list[int]) -> str | None:
    """Reason the head pointers fail to form a single rooted tree, if any."""
    n = len(heads)
    roots = sum(1 for h in heads if h == 0)
    if roots != 1:
        return f"expected exactly one root, found {roots}"
    for h in heads:
        if not 0 <= h <= n:
            return f"head index {h} out of range [0, {n}]"
    for start in range(n):
        node, steps = start, 0
        while heads[node] != 0:
            node = heads[node] - 1
            steps += 1
            if steps > n:
                return f"cycle reachable from word {start + 1}"
    return None


@dataclass(frozen=True)
class ConlluResult:
    """Parsed trees plus the count of sentences dropped as non-trees.

    Iterates and indexes like the tree list it wraps.
    """

    trees: list[ParseTree]
    skipped: int = 0

    def __iter__(self):
        return iter(self.trees)

    def __len__(self) -> int:
        return len(self.trees)

    def __getitem__(self, index):
        return self.trees[index]


def read_conllu(path: str | os.PathLike[str]) -> ConlluResult:
    """Read dependency trees from a CoNLL-U file.

    Range lines, empty nodes, and comments are skipped. A sentence whose
    heads are not a tree is dropped and counted in `skipped`.
    """
    trees: list[ParseTree] = []
    skipped = 0
    block: list[tuple[int, list[str]]] = []

    def flush() -> None:
        nonlocal skipped
        if not block:
            return
        words, heads, upos = [], [], []
        for lineno, columns in block:
            expected_id = len(words) + 1
            if int(columns[0]) != expected_id:
                raise FormatError(
                    f"line {lineno}: token id {columns[0]}, expected {expected_id}"
                )
            words.append(columns[1])
            upos.append(columns[3])
            try:
                heads.append(int(columns[6]))
            except ValueError:
                raise FormatError(
                    f"line {lineno}: HEAD column {columns[6]!r} is not an integer"
                ) from None
        block.clear()
        if _tree_violation(heads):
            skipped += 1
            return
        trees.append(ParseTree(words, heads, upos))

    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                flush()
                continue
            if line.startswith("#"):
                continue
            columns = line.split("\t")
            if len(columns) < 10:
                columns = line.split()
            if len(columns) < 10:
                raise FormatError(
                    f"line {lineno}: {len(columns)} columns, expected 10"
                )
            token_id = columns[0]
            if "-" in token_id or "." in token_id:
                continue  # multiword range line / empty node
            if not token_id.isdigit():
                raise FormatError(f"line {lineno}: bad token id {token_id!r}")
            block.append((lineno, columns))
    flush()
    return ConlluResult(trees, skipped)


@dataclass(frozen=True)
class SpanExample:
    """A labeled span (or span pair) over one sentence's words."""

    sentence_index: int
    span1: tuple[int, int]
    span2: tuple[int, int] | None
    label: str

    def __post_init__(self) -> None:
        if self.sentence_index < 0:
            raise ContractError(f"negative sentence index {self.sentence_index}")
        for name, span in (("span1", self.span1), ("span2", self.span2)):
            if span is None:
                continue
            i, j = span
            if not (0 <= i < j):
                raise ContractError(f"{name} must satisfy 0 <= i < j, got ({i},{j})")


def read_span_tasks(path: str | os.PathLike[str]) -> list[SpanExample]:
    """Read span examples from a JSON-lines file.

    Each line holds {"sentence_index": int, "span1": [i, j],
    "span2": [u, v] (optional), "label": str}. Range checks against a
    particular dump happen when features are built.
    """
    examples: list[SpanExample] = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"line {lineno}: bad JSON ({exc.msg})") from None
            try:
                span2 = record.get("span2")
                examples.append(
                    SpanExample(
                        sentence_index=int(record["sentence_index"]),
                        span1=tuple(int(v) for v in record["span1"]),
                        span2=None if span2 is None else tuple(int(v) for v in span2),
                        label=str(record["label"]),
                    )
                )
            except KeyError as exc:
                raise FormatError(f"line {lineno}: missing field {exc}") from None
            except (ContractError, TypeError, ValueError) as exc:
                raise FormatError(f"line {lineno}: {exc}") from None
    return examples
