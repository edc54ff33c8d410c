"""Undirected simple graphs and the elementary queries every other module uses."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

Edge = tuple[int, int]


class GraphError(ValueError):
    """Raised for malformed graph construction input."""


def _normalize(u: int, v: int, n: int) -> Edge:
    u, v = int(u), int(v)
    if u < 0 or v < 0 or u >= n or v >= n:
        raise GraphError(f"node index out of range: ({u}, {v}) with n={n}")
    if u == v:
        raise GraphError(f"self-loop rejected: ({u}, {v})")
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable undirected simple graph.

    ``edges`` is a sorted tuple of ``(u, v)`` pairs with ``u < v``. ``features``
    is an optional ``(n, F)`` float64 array (never mutated after construction)
    and ``label`` an optional class id.
    """

    n: int
    edges: tuple[Edge, ...]
    features: Optional[np.ndarray] = None
    label: Optional[int] = None
    _adj: tuple[tuple[int, ...], ...] = field(init=False, repr=False)
    _edge_set: frozenset = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.n < 0:
            raise GraphError("node count must be nonnegative")
        norm = sorted({_normalize(u, v, self.n) for u, v in self.edges})
        object.__setattr__(self, "edges", tuple(norm))
        if self.features is not None:
            feats = np.array(self.features, dtype=np.float64, copy=True)
            if feats.ndim != 2 or feats.shape[0] != self.n:
                raise GraphError(
                    f"features must have shape ({self.n}, F), got {feats.shape}"
                )
            feats.setflags(write=False)
            object.__setattr__(self, "features", feats)
        nbrs: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in norm:
            nbrs[u].append(v)
            nbrs[v].append(u)
        object.__setattr__(self, "_adj", tuple(tuple(sorted(x)) for x in nbrs))
        object.__setattr__(self, "_edge_set", frozenset(norm))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def feature_width(self) -> int:
        return 0 if self.features is None else int(self.features.shape[1])

    def neighbors(self, v: int) -> tuple[int, ...]:
        """Neighbors of ``v`` in ascending order."""
        return self._adj[v]

    def has_edge(self, u: int, v: int) -> bool:
        return ((u, v) if u < v else (v, u)) in self._edge_set

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=np.float64)
        for u, v in self.edges:
            a[u, v] = a[v, u] = 1.0
        return a

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        if (self.n, self.edges, self.label) != (other.n, other.edges, other.label):
            return False
        if self.features is None or other.features is None:
            return self.features is None and other.features is None
        return np.array_equal(self.features, other.features)

    __hash__ = None  # type: ignore[assignment]

    # functional updates; the original graph is never touched

    def with_edges(self, edges: Iterable[Sequence[int]]) -> "Graph":
        return Graph(self.n, tuple(tuple(e) for e in edges), self.features, self.label)

    def with_label(self, label: Optional[int]) -> "Graph":
        return Graph(self.n, self.edges, self.features, label)

    def add_edges(self, edges: Iterable[Sequence[int]]) -> "Graph":
        return self.with_edges(list(self.edges) + [tuple(e) for e in edges])

    def remove_edges(self, edges: Iterable[Sequence[int]]) -> "Graph":
        drop = {_normalize(u, v, self.n) for u, v in edges}
        return self.with_edges(e for e in self.edges if e not in drop)

    def relabel(self, perm: Sequence[int]) -> "Graph":
        """Return the isomorphic graph where old node ``i`` becomes ``perm[i]``."""
        perm = np.asarray(perm, dtype=np.int64)
        if sorted(perm.tolist()) != list(range(self.n)):
            raise GraphError("relabel expects a permutation of 0..n-1")
        feats = None
        if self.features is not None:
            feats = np.empty_like(self.features)
            feats[perm] = self.features
        edges = tuple((int(perm[u]), int(perm[v])) for u, v in self.edges)
        return Graph(self.n, edges, feats, self.label)


class GraphBuilder:
    """Mutable scratch space for the perturbation algorithms.

    Holds an adjacency-set representation plus a growable feature list, and
    freezes into a :class:`Graph` with :meth:`build`.
    """

    def __init__(self, g: Graph):
        self.n = g.n
        self.label = g.label
        self.adj: list[set[int]] = [set(g.neighbors(v)) for v in range(g.n)]
        self.rows: Optional[list[np.ndarray]] = (
            None if g.features is None else [row.copy() for row in g.features]
        )
        self._width = g.feature_width

    def has_edge(self, u: int, v: int) -> bool:
        return v in self.adj[u]

    def degree(self, v: int) -> int:
        return len(self.adj[v])

    def add_edge(self, u: int, v: int) -> None:
        _normalize(u, v, self.n)
        self.adj[u].add(v)
        self.adj[v].add(u)

    def remove_edge(self, u: int, v: int) -> None:
        self.adj[u].discard(v)
        self.adj[v].discard(u)

    def add_node(self, copy_features_from: Optional[int] = None) -> int:
        """Append a node, optionally replicating the feature row of another."""
        new = self.n
        self.n += 1
        self.adj.append(set())
        if self.rows is not None:
            if copy_features_from is None:
                self.rows.append(np.zeros(self._width))
            else:
                self.rows.append(self.rows[copy_features_from].copy())
        return new

    def component_count(self) -> int:
        return _count_components(self.n, self.adj)

    def build(self) -> Graph:
        edges = tuple((u, v) for u in range(self.n) for v in self.adj[u] if u < v)
        feats = None
        if self.rows is not None:
            feats = (
                np.vstack(self.rows) if self.rows else np.zeros((0, self._width))
            )
        return Graph(self.n, edges, feats, self.label)


def from_edge_list(
    n: int,
    edges: Iterable[Sequence[int]],
    features: Optional[np.ndarray] = None,
    label: Optional[int] = None,
) -> Graph:
    """Build a graph, deduplicating edges after ordering each pair as ``u < v``."""
    if n < 0:
        raise GraphError("node count must be nonnegative")
    return Graph(n, tuple(tuple(e) for e in edges), features, label)


@dataclass(frozen=True)
class ComponentLabeling:
    count: int
    labels: np.ndarray


def _label_components(n: int, adj: Sequence[Iterable[int]]) -> tuple[int, np.ndarray]:
    labels = np.full(n, -1, dtype=np.int64)
    count = 0
    for root in range(n):
        if labels[root] >= 0:
            continue
        labels[root] = count
        stack = [root]
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if labels[w] < 0:
                    labels[w] = count
                    stack.append(w)
        count += 1
    return count, labels


def _count_components(n: int, adj: Sequence[Iterable[int]]) -> int:
    return _label_components(n, adj)[0]


def connected_components(g: Graph) -> ComponentLabeling:
    """Label connected components; ids are assigned in order of lowest node."""
    count, labels = _label_components(g.n, g._adj)
    return ComponentLabeling(count, labels)


def degree_vector(g: Graph) -> np.ndarray:
    return np.array([len(g.neighbors(v)) for v in range(g.n)], dtype=np.int64)


# small named graphs, used throughout the tests and synthetic corpora

def cycle_graph(n: int) -> Graph:
    return from_edge_list(n, [(i, (i + 1) % n) for i in range(n)])


def path_graph(n: int) -> Graph:
    return from_edge_list(n, [(i, i + 1) for i in range(n - 1)])


def star_graph(leaves: int) -> Graph:
    """Star with center 0 and ``leaves`` leaves."""
    return from_edge_list(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


def complete_graph(n: int) -> Graph:
    return from_edge_list(n, [(i, j) for i in range(n) for j in range(i + 1, n)])
