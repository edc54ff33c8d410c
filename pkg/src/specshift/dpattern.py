"""Recursive d-pattern refinement with exact (string-interned) pattern ids.

A node's 0-pattern is its color; its d-pattern is its own (d-1)-pattern
together with the multiset of its neighbors' (d-1)-patterns. Patterns are
canonicalized as strings and interned in a shared table, so two nodes get
the same id at depth d iff their d-patterns are structurally identical,
across every graph refined with the same table.
"""

from __future__ import annotations

from collections import Counter
from typing import Hashable, Mapping, Optional, Sequence

import numpy as np

from .graph import Graph, cycle_graph


class PatternInterner:
    """Maps canonical pattern strings to dense integer ids, per depth."""

    def __init__(self):
        self._tables: dict[int, dict[str, int]] = {}

    def intern(self, depth: int, key: str) -> int:
        table = self._tables.setdefault(depth, {})
        if key not in table:
            table[key] = len(table)
        return table[key]

    def canonical(self, depth: int, pattern_id: int) -> str:
        for key, pid in self._tables.get(depth, {}).items():
            if pid == pattern_id:
                return key
        raise KeyError((depth, pattern_id))


PatternTable = list[np.ndarray]


def d_patterns(
    g: Graph,
    colors: Optional[Sequence[Hashable]] = None,
    d_max: int = 3,
    interner: Optional[PatternInterner] = None,
) -> PatternTable:
    """Pattern ids for every depth 0..d_max; ``table[d][v]`` is node v's id.

    ``colors`` default to a single shared color. Pass the same ``interner``
    to compare patterns across graphs.
    """
    if d_max < 0:
        raise ValueError("d_max must be >= 0")
    interner = interner or PatternInterner()
    colors = [0] * g.n if colors is None else list(colors)
    if len(colors) != g.n:
        raise ValueError(f"expected {g.n} colors, got {len(colors)}")
    current = np.array([interner.intern(0, repr(c)) for c in colors], dtype=np.int64)
    table = [current]
    for depth in range(1, d_max + 1):
        nxt = np.empty(g.n, dtype=np.int64)
        for v in range(g.n):
            counts = sorted(Counter(int(current[w]) for w in g.neighbors(v)).items())
            key = f"{current[v]}|" + ",".join(f"{p}x{m}" for p, m in counts)
            nxt[v] = interner.intern(depth, key)
        table.append(nxt)
        current = nxt
    return table


def partition(ids: np.ndarray) -> set[frozenset[int]]:
    groups: dict[int, set[int]] = {}
    for v, pid in enumerate(ids.tolist()):
        groups.setdefault(pid, set()).add(v)
    return {frozenset(s) for s in groups.values()}


def class_counts(table: PatternTable) -> list[int]:
    return [len(set(ids.tolist())) for ids in table]


def verify_cycle_lemma(n_values: Sequence[int], d_max: int, graphs: Optional[Sequence[Graph]] = None) -> bool:
    """True iff every node of every featureless cycle C_n shares one pattern
    id at each depth up to ``d_max``.

    ``graphs`` substitutes other graphs for the cycles (used for negative
    controls); they are refined with the same shared table.
    """
    if graphs is None:
        if any(n < 3 for n in n_values):
            raise ValueError("cycle graphs need n >= 3")
        graphs = [cycle_graph(n) for n in n_values]
    interner = PatternInterner()
    tables = [d_patterns(g, None, d_max, interner) for g in graphs]
    for depth in range(d_max + 1):
        ids = set()
        for t in tables:
            ids.update(t[depth].tolist())
        if len(ids) != 1:
            return False
    return True


def compare_patterns(
    g_a: Graph,
    g_b: Graph,
    colors_a: Optional[Sequence[Hashable]],
    colors_b: Optional[Sequence[Hashable]],
    id_map: Mapping[int, int],
    d_max: int,
) -> list[bool]:
    """For each depth, whether every mapped pair (a -> b) shares a pattern id."""
    if len(set(id_map.values())) != len(id_map):
        raise ValueError("id_map must be injective")
    interner = PatternInterner()
    ta = d_patterns(g_a, colors_a, d_max, interner)
    tb = d_patterns(g_b, colors_b, d_max, interner)
    return [
        all(ta[d][a] == tb[d][b] for a, b in id_map.items()) for d in range(d_max + 1)
    ]
