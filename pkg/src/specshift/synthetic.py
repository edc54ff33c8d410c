"""Seeded synthetic graph corpora with size-dependent cycle structure."""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .cycles import graph_mean_cycle_length
from .datasets import Dataset
from .graph import Graph, from_edge_list


def _grow(n: int, rng: np.random.Generator, ring_prob: float, min_room: int,
          ring_length: Callable[[int], int]) -> list[tuple[int, int]]:
    # uniform-attachment tree; each step either hangs a ring (attached by one
    # edge) or a single pendant node
    edges: list[tuple[int, int]] = []
    size = 1
    while size < n:
        room = n - size
        if room >= min_room and rng.random() < ring_prob:
            length = ring_length(room)
            anchor = int(rng.integers(size))
            ring = list(range(size, size + length))
            edges.append((anchor, ring[0]))
            edges.extend((ring[i], ring[(i + 1) % length]) for i in range(length))
            size += length
        else:
            edges.append((int(rng.integers(size)), size))
            size += 1
    return edges


def ring_tree_graph(
    n: int,
    rng: np.random.Generator,
    max_ring: int,
    min_ring: int = 3,
    ring_prob: float = 0.5,
    label: Optional[int] = None,
    features: bool = True,
) -> Graph:
    """Random tree with rings of length in ``[min_ring, max_ring]`` hung off it.

    Ring lengths are truncated to the remaining node budget, so the result
    has exactly ``n`` nodes.
    """
    def length(room):
        return min(int(rng.integers(min_ring, max_ring + 1)), room)

    edges = _grow(n, rng, ring_prob, min_ring, length)
    return from_edge_list(n, edges, np.ones((n, 1)) if features else None, label)


def size_shift_graph(
    n: int,
    rng: np.random.Generator,
    ring_prob: float = 0.8,
    long_scale: float = 300.0,
    long_cap: float = 0.3,
    long_offset: float = 20.0,
) -> Graph:
    """Tree with short (5-6) rings plus long rings that get likelier with size.

    A ring is long with probability ``clip((n - long_offset) / long_scale,
    0, long_cap)``; long rings have length in ``[8, 4 + n // 5]``.
    """
    p_long = min(long_cap, max(0.0, (n - long_offset) / long_scale))

    def length(room):
        if room >= 8 and rng.random() < p_long:
            return int(rng.integers(8, max(8, min(4 + n // 5, room)) + 1))
        return min(int(rng.integers(5, 7)), room)

    return from_edge_list(n, _grow(n, rng, ring_prob, 5, length), np.ones((n, 1)))


def size_shift_corpus(
    count: int = 400, seed: int = 0, n_range: tuple[int, int] = (10, 120)
) -> Dataset:
    """Unlabeled corpus whose cycle lengths grow with graph size."""
    rng = np.random.default_rng(seed)
    lo, hi = n_range
    graphs = [size_shift_graph(int(rng.integers(lo, hi + 1)), rng) for _ in range(count)]
    return Dataset(graphs, f"size-shift-{seed}", 1)


def cycle_length_task(
    count: int = 400,
    seed: int = 0,
    small_range: tuple[int, int] = (8, 16),
    large_range: tuple[int, int] = (32, 48),
    threshold: float = 6.0,
) -> Dataset:
    """Binary task: label 1 iff the mean basis-cycle length is >= ``threshold``.

    The first half of the graphs are drawn from ``small_range`` and the rest
    from ``large_range``. Each graph picks short (3-5) or long (6-9) rings
    with equal odds, and is redrawn until it has at least one cycle.
    """
    rng = np.random.default_rng(seed)
    graphs = []
    for i in range(count):
        lo, hi = small_range if i < count // 2 else large_range
        n = int(rng.integers(lo, hi + 1))
        while True:
            long = rng.random() < 0.5
            lo_len, hi_len = (6, 9) if long else (3, 5)
            edges = _grow(n, rng, 0.5, 3,
                          lambda room, lo_len=lo_len, hi_len=hi_len: min(int(rng.integers(lo_len, hi_len + 1)), room))
            g = from_edge_list(n, edges, np.ones((n, 1)))
            mean = graph_mean_cycle_length(g)
            if mean is not None:
                break
        graphs.append(from_edge_list(n, g.edges, g.features, int(mean >= threshold)))
    return Dataset(graphs, f"cycle-length-{seed}", 2)
