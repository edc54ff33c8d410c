"""Propagation-matrix spectra, exact 1-D Wasserstein distances, and the
similar-size vs different-size shift summary."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional, Sequence

import numba
import numpy as np

from .datasets import Dataset
from .eigen import EigenError, eigh, eigvalsh
from .graph import Graph, degree_vector

Source = Literal["eigenvalues", "degrees"]


class SpectralError(ValueError):
    pass


def worker_count() -> int:
    env = os.environ.get("SPECSHIFT_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def normalized_adjacency(g: Graph) -> np.ndarray:
    """T = (D+I)^-1/2 (A+I) (D+I)^-1/2 as a dense array."""
    if g.n == 0:
        raise SpectralError("empty graph")
    a = g.adjacency() + np.eye(g.n)
    d1 = degree_vector(g) + 1.0
    # one sqrt of the product keeps exact entries like 1/2 for K2
    return a / np.sqrt(d1[:, None] * d1[None, :])


def normalized_laplacian(g: Graph) -> np.ndarray:
    """I - D^-1/2 A D^-1/2, with zero rows/columns for isolated nodes."""
    if g.n == 0:
        raise SpectralError("empty graph")
    deg = degree_vector(g).astype(np.float64)
    s = np.zeros(g.n)
    s[deg > 0] = 1.0 / np.sqrt(deg[deg > 0])
    lap = -(s[:, None] * g.adjacency() * s[None, :])
    lap[np.diag_indices(g.n)] = (deg > 0).astype(np.float64)
    return lap


def spectrum(g: Graph, matrix: Literal["adjacency", "laplacian"] = "adjacency") -> np.ndarray:
    """Sorted eigenvalues of the propagation matrix (or normalized Laplacian)."""
    m = normalized_adjacency(g) if matrix == "adjacency" else normalized_laplacian(g)
    return eigvalsh(m)


def degree_distribution(g: Graph) -> np.ndarray:
    return np.sort(degree_vector(g)).astype(np.float64)


@numba.njit(cache=True, nogil=True)
def _w1_sorted(a, b):
    p = a.shape[0]
    q = b.shape[0]
    i = 0
    j = 0
    total = 0.0
    prev = 0.0
    fa = 0.0
    fb = 0.0
    started = False
    while i < p or j < q:
        if j >= q or (i < p and a[i] <= b[j]):
            x = a[i]
        else:
            x = b[j]
        if started:
            total += abs(fa - fb) * (x - prev)
        while i < p and a[i] == x:
            i += 1
        while j < q and b[j] == x:
            j += 1
        fa = i / p
        fb = j / q
        prev = x
        started = True
    return total


def wasserstein1(a: Sequence[float], b: Sequence[float]) -> float:
    """Exact W1 between two uniform-weight empirical distributions on the line."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise SpectralError("empty distribution")
    return float(_w1_sorted(a, b))


@numba.njit(cache=True, nogil=True)
def _w1_row(flat, offsets, i, out):
    a = flat[offsets[i]: offsets[i + 1]]
    for j in range(i + 1, offsets.shape[0] - 1):
        out[j] = _w1_sorted(a, flat[offsets[j]: offsets[j + 1]])


def pairwise_w1(distributions: Sequence[np.ndarray], threads: Optional[int] = None) -> np.ndarray:
    """Symmetric matrix of W1 distances; rows are farmed out to a thread pool.

    Each entry is computed independently, so the result does not depend on
    scheduling.
    """
    dists = [np.sort(np.asarray(x, dtype=np.float64)) for x in distributions]
    if any(x.size == 0 for x in dists):
        raise SpectralError("empty distribution")
    n = len(dists)
    offsets = np.zeros(n + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([x.size for x in dists])
    flat = np.concatenate(dists) if dists else np.zeros(0)
    out = np.zeros((n, n))
    threads = threads or worker_count()
    if threads <= 1:
        for i in range(n):
            _w1_row(flat, offsets, i, out[i])
    else:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(lambda i: _w1_row(flat, offsets, i, out[i]), range(n)))
    iu = np.triu_indices(n, 1)
    out[(iu[1], iu[0])] = out[iu]
    return out


@dataclass
class DistanceMatrix:
    """Pairwise distances with rows/columns in ascending size order.

    ``order[p]`` is the original dataset index at position ``p`` and
    ``sizes[p]`` its node count.
    """

    values: np.ndarray
    order: np.ndarray
    sizes: np.ndarray


def size_order(sizes: Sequence[int]) -> np.ndarray:
    """Indices sorted ascending by size, ties by original index."""
    return np.argsort(np.asarray(sizes), kind="stable")


def graph_distributions(
    graphs: Sequence[Graph], source: Source = "eigenvalues", threads: Optional[int] = None
) -> list[np.ndarray]:
    if source == "degrees":
        return [degree_distribution(g) for g in graphs]
    if source != "eigenvalues":
        raise ValueError(f"unknown source {source!r}")

    def one(i: int) -> np.ndarray:
        try:
            return spectrum(graphs[i])
        except EigenError as exc:
            raise EigenError(f"graph {i}: {exc}") from exc

    threads = threads or worker_count()
    if threads <= 1:
        return [one(i) for i in range(len(graphs))]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(one, range(len(graphs))))


def spectrum_distance_matrix(
    d: Dataset | Sequence[Graph], source: Source = "eigenvalues", threads: Optional[int] = None
) -> DistanceMatrix:
    graphs = d.graphs if isinstance(d, Dataset) else list(d)
    if not graphs:
        raise SpectralError("empty dataset")
    sizes = np.array([g.n for g in graphs])
    order = size_order(sizes)
    dists = graph_distributions([graphs[i] for i in order], source, threads)
    return DistanceMatrix(pairwise_w1(dists, threads), order, sizes[order])


@dataclass(frozen=True)
class ShiftSummary:
    avg_similar: float
    avg_different: float
    relative_difference: float

    def __str__(self) -> str:
        return (
            f"similar={self.avg_similar:.6g} different={self.avg_different:.6g} "
            f"relative={100 * self.relative_difference:.2f}%"
        )


def similar_masks(sizes: np.ndarray, order: np.ndarray, k: int = 20) -> np.ndarray:
    """Boolean matrix; row p marks the k graphs nearest in size to graph p.

    Ties in size difference go to the smaller original index; a graph is
    never its own neighbor.
    """
    n = sizes.shape[0]
    if n <= k + 1:
        raise SpectralError("dataset too small for k-neighbor summary")
    mask = np.zeros((n, n), dtype=bool)
    for p in range(n):
        gap = np.abs(sizes - sizes[p])
        rank = np.lexsort((order, gap))
        rank = rank[rank != p][:k]
        mask[p, rank] = True
    return mask


def similar_vs_different(dm: DistanceMatrix, k: int = 20) -> ShiftSummary:
    mask = similar_masks(np.asarray(dm.sizes), np.asarray(dm.order), k)
    other = ~mask
    np.fill_diagonal(other, False)
    sim = float(dm.values[mask].mean())
    diff = float(dm.values[other].mean())
    if sim == 0.0:
        if diff == 0.0:
            return ShiftSummary(0.0, 0.0, 0.0)
        raise SpectralError("degenerate summary")
    return ShiftSummary(sim, diff, (diff - sim) / sim)


def spectral_filter_apply(g: Graph, coeffs: Sequence[float], x: np.ndarray) -> np.ndarray:
    """U f(Lambda) U^T X through a full eigendecomposition of T."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != g.n:
        raise ValueError(f"X has {x.shape[0]} rows, graph has {g.n} nodes")
    lam, u = eigh(normalized_adjacency(g))
    f = np.zeros_like(lam)
    for c in reversed(list(coeffs)):
        f = f * lam + c
    return u @ (f[:, None] * (u.T @ x))


def polynomial_filter_apply(g: Graph, coeffs: Sequence[float], x: np.ndarray) -> np.ndarray:
    """sum_i c_i T^i X by Horner's rule, never touching the spectrum."""
    t = normalized_adjacency(g)
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    for c in reversed(list(coeffs)):
        out = t @ out + c * x
    return out


# export formats


def write_distance_csv(dm: DistanceMatrix, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(str(int(i)) for i in dm.order) + "\n")
        for row in dm.values:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def read_distance_csv(path: str | os.PathLike) -> tuple[np.ndarray, np.ndarray]:
    """Return (values, order) from a CSV written by :func:`write_distance_csv`."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise SpectralError(f"empty matrix file: {path}")
    order = np.array([int(x) for x in lines[0].split(",")], dtype=np.int64)
    values = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:] if ln])
    if values.shape != (order.size, order.size):
        raise SpectralError(f"matrix shape {values.shape} does not match {order.size} ids")
    return values, order


def write_pgm(values: np.ndarray, path: str | os.PathLike) -> None:
    """8-bit binary graymap, min-max normalized (constant input maps to 0)."""
    lo, hi = float(values.min()), float(values.max())
    scaled = np.zeros_like(values) if hi == lo else (values - lo) / (hi - lo)
    pixels = np.round(scaled * 255).astype(np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
