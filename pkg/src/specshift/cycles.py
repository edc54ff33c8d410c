"""Fundamental cycle bases and the cycle-centric graph perturbations.

The basis is built the Paton way: grow a spanning forest, then every non-tree
edge (chord) closes exactly one cycle through tree paths. The forest is grown
by BFS from the lowest-id node of each component using sorted neighbor lists,
so the basis is a deterministic function of the graph.

Every stochastic operation takes an explicit ``numpy.random.Generator``.
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .datasets import Dataset
from .graph import Edge, Graph, GraphBuilder, connected_components


class CycleBreakingError(RuntimeError):
    pass


class CycleSkipWarning(UserWarning):
    """A basis cycle had no remaining edge to subdivide."""


@dataclass(frozen=True)
class Cycle:
    """A simple cycle as a closed walk; ``nodes[0] -> nodes[1]`` is the chord."""

    nodes: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def edges(self) -> tuple[Edge, ...]:
        k = len(self.nodes)
        return tuple((self.nodes[i], self.nodes[(i + 1) % k]) for i in range(k))


@dataclass(frozen=True)
class CycleBasis:
    cycles: tuple[Cycle, ...]

    def __len__(self) -> int:
        return len(self.cycles)

    def __iter__(self):
        return iter(self.cycles)

    def __getitem__(self, j: int) -> Cycle:
        return self.cycles[j]

    def lengths(self) -> np.ndarray:
        return np.array([len(c) for c in self.cycles], dtype=np.int64)


def circuit_rank(g: Graph) -> int:
    return g.num_edges - g.n + connected_components(g).count


def _bfs_forest(g: Graph) -> tuple[np.ndarray, np.ndarray]:
    parent = np.full(g.n, -1, dtype=np.int64)
    depth = np.full(g.n, -1, dtype=np.int64)
    for root in range(g.n):
        if depth[root] >= 0:
            continue
        depth[root] = 0
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for w in g.neighbors(u):
                if depth[w] < 0:
                    depth[w] = depth[u] + 1
                    parent[w] = u
                    queue.append(w)
    return parent, depth


def cycle_basis(g: Graph) -> CycleBasis:
    """Fundamental cycle basis; one cycle per chord, chords in sorted edge order."""
    parent, depth = _bfs_forest(g)
    cycles = []
    for u, v in g.edges:
        if parent[v] == u or parent[u] == v:
            continue
        # climb both endpoints to their lowest common ancestor
        up_u, up_v = [u], [v]
        a, b = u, v
        while depth[a] > depth[b]:
            a = parent[a]
            up_u.append(a)
        while depth[b] > depth[a]:
            b = parent[b]
            up_v.append(b)
        while a != b:
            a, b = parent[a], parent[b]
            up_u.append(a)
            up_v.append(b)
        # walk: u -> v -> ... -> lca -> ... -> (child of u)
        walk = up_v + up_u[-2:0:-1]
        cycles.append(Cycle(tuple(int(x) for x in [u] + walk)))
    return CycleBasis(tuple(cycles))


def break_cycles(g: Graph, basis: Optional[CycleBasis] = None) -> Graph:
    """Remove one edge per basis cycle without changing the component count.

    Depth-first backtracking over the edges of each basis cycle, only
    considering edges still present in the graph.
    """
    basis = cycle_basis(g) if basis is None else basis
    if not len(basis):
        return g
    b = GraphBuilder(g)
    target = b.component_count()
    # choice[i] = index into basis[i].edges of the edge currently removed
    choice = [-1] * len(basis)
    i = 0
    while 0 <= i < len(basis):
        edges = basis[i].edges
        if choice[i] >= 0:
            b.add_edge(*edges[choice[i]])
        j = choice[i] + 1
        choice[i] = -1
        while j < len(edges):
            u, v = edges[j]
            if b.has_edge(u, v):
                b.remove_edge(u, v)
                if b.component_count() == target:
                    choice[i] = j
                    break
                b.add_edge(u, v)
            j += 1
        if choice[i] >= 0:
            i += 1
            if i < len(basis):
                choice[i] = -1
        else:
            i -= 1
    if i == len(basis):
        return b.build()
    raise CycleBreakingError("cycle breaking infeasible")


def _argmin_degree(b: GraphBuilder, nodes: Iterable[int]) -> int:
    return min(nodes, key=lambda v: (b.degree(v), v))


def add_one_cycle_length(
    g: Graph, rng: np.random.Generator, basis: Optional[CycleBasis] = None
) -> Graph:
    """Subdivide one randomly chosen edge of every basis cycle.

    The new node copies the feature row of the cycle's minimum-degree node
    (degree measured after the edge removal, ties to the lowest id). Cycles
    whose edges have all been removed already are skipped with a warning.
    """
    basis = cycle_basis(g) if basis is None else basis
    if not len(basis):
        return g
    b = GraphBuilder(g)
    for j, cyc in enumerate(basis):
        present = [e for e in cyc.edges if b.has_edge(*e)]
        if not present:
            warnings.warn(f"basis cycle {j} has no remaining edge; skipped", CycleSkipWarning, stacklevel=2)
            continue
        v1, v2 = present[int(rng.integers(len(present)))]
        b.remove_edge(v1, v2)
        new = b.add_node(copy_features_from=_argmin_degree(b, cyc.nodes))
        b.add_edge(v1, new)
        b.add_edge(v2, new)
    return b.build()


GraphsLike = Union[Dataset, Sequence[Graph]]


def _graphs(d: GraphsLike) -> Sequence[Graph]:
    return d.graphs if isinstance(d, Dataset) else d


def align_cycle_lengths(
    d: GraphsLike, skip_ratio: int, increments: int, rng: np.random.Generator
) -> GraphsLike:
    """Apply ``increments`` rounds of :func:`add_one_cycle_length` to every
    ``skip_ratio``-th graph (indices 0, R, 2R, ...), recomputing the basis
    before each round. Returns the same container type it was given."""
    if skip_ratio < 1 or increments < 1:
        raise ValueError("skip_ratio and increments must be >= 1")
    out = []
    for i, g in enumerate(_graphs(d)):
        if i % skip_ratio == 0:
            for _ in range(increments):
                g = add_one_cycle_length(g, rng)
        out.append(g)
    return d.replace_graphs(out) if isinstance(d, Dataset) else out


def node_cycle_features(g: Graph, basis: Optional[CycleBasis] = None) -> np.ndarray:
    """``(N, 2)`` matrix of [in-some-basis-cycle, mean length of those cycles]."""
    basis = cycle_basis(g) if basis is None else basis
    total = np.zeros(g.n)
    count = np.zeros(g.n)
    for cyc in basis:
        idx = np.fromiter(cyc.nodes, dtype=np.int64)
        total[idx] += len(cyc)
        count[idx] += 1
    out = np.zeros((g.n, 2))
    member = count > 0
    out[member, 0] = 1.0
    out[member, 1] = total[member] / count[member]
    return out


def graph_mean_cycle_length(g: Graph) -> Optional[float]:
    lengths = cycle_basis(g).lengths()
    return float(lengths.mean()) if lengths.size else None


def cycle_length_stats(d: GraphsLike) -> tuple[float, float]:
    """Mean and population std of per-graph average basis-cycle length.

    Acyclic graphs are left out of both statistics.
    """
    per_graph = [m for m in map(graph_mean_cycle_length, _graphs(d)) if m is not None]
    if not per_graph:
        raise ValueError("no cyclic graphs in dataset")
    arr = np.array(per_graph)
    return float(arr.mean()), float(arr.std())


def add_random_nodes(g: Graph, count: int, rng: np.random.Generator) -> Graph:
    """Attach ``count`` new nodes, each to two distinct random existing nodes.

    Each insertion draws the two endpoints first, then the node whose
    feature row is replicated, all uniformly over the current node set.
    """
    if count < 0:
        raise ValueError("count must be nonnegative")
    if count == 0:
        return g
    if g.n < 2:
        raise ValueError("graph too small for random attachment")
    b = GraphBuilder(g)
    for _ in range(count):
        u, v = (int(x) for x in rng.choice(b.n, size=2, replace=False))
        src = int(rng.integers(b.n))
        new = b.add_node(copy_features_from=src)
        b.add_edge(u, new)
        b.add_edge(v, new)
    return b.build()
