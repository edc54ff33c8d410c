"""Dense symmetric eigensolver: Householder reduction to tridiagonal form
followed by implicit-shift QL iteration.

Both kernels are compiled with numba; inputs are copied, never modified.
"""

from __future__ import annotations

import math

import numba
import numpy as np

# off-diagonal e[m] is treated as zero once |e[m]| <= OFFDIAG_TOL * (|d[m]| + |d[m+1]|)
OFFDIAG_TOL = 1e-12
MAX_SWEEPS = 50
SYMMETRY_TOL = 1e-12


class EigenError(ArithmeticError):
    pass


@numba.njit(cache=True, nogil=True)
def _tred2(z, want_vectors):
    """In-place Householder tridiagonalization of symmetric ``z``.

    Returns (d, e) with e[i] the subdiagonal entry coupling rows i-1 and i.
    When ``want_vectors`` is set, ``z`` is overwritten with the orthogonal
    transform Q such that Q^T A Q is tridiagonal.
    """
    n = z.shape[0]
    d = np.zeros(n)
    e = np.zeros(n)
    for i in range(n - 1, 0, -1):
        l = i - 1
        h = 0.0
        scale = 0.0
        if l > 0:
            for k in range(i):
                scale += abs(z[i, k])
            if scale == 0.0:
                e[i] = z[i, l]
            else:
                for k in range(i):
                    z[i, k] /= scale
                    h += z[i, k] * z[i, k]
                f = z[i, l]
                g = -math.sqrt(h) if f >= 0.0 else math.sqrt(h)
                e[i] = scale * g
                h -= f * g
                z[i, l] = f - g
                f = 0.0
                for j in range(i):
                    if want_vectors:
                        z[j, i] = z[i, j] / h
                    g = 0.0
                    for k in range(j + 1):
                        g += z[j, k] * z[i, k]
                    for k in range(j + 1, i):
                        g += z[k, j] * z[i, k]
                    e[j] = g / h
                    f += e[j] * z[i, j]
                hh = f / (h + h)
                for j in range(i):
                    f = z[i, j]
                    g = e[j] - hh * f
                    e[j] = g
                    for k in range(j + 1):
                        z[j, k] -= f * e[k] + g * z[i, k]
        else:
            e[i] = z[i, l]
        d[i] = h
    d[0] = 0.0
    e[0] = 0.0
    for i in range(n):
        if want_vectors:
            if d[i] != 0.0:
                for j in range(i):
                    g = 0.0
                    for k in range(i):
                        g += z[i, k] * z[k, j]
                    for k in range(i):
                        z[k, j] -= g * z[k, i]
            d[i] = z[i, i]
            z[i, i] = 1.0
            for j in range(i):
                z[j, i] = 0.0
                z[i, j] = 0.0
        else:
            d[i] = z[i, i]
    return d, e


@numba.njit(cache=True, nogil=True)
def _tqli(d, e, z, want_vectors, tol, max_sweeps):
    """Implicit-shift QL on the tridiagonal (d, e); returns 0 or -1 on failure."""
    n = d.shape[0]
    for i in range(1, n):
        e[i - 1] = e[i]
    if n > 0:
        e[n - 1] = 0.0
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= tol * dd or abs(e[m]) + dd == dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > max_sweeps:
                return -1
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + (abs(r) if g >= 0.0 else -abs(r)))
            s = 1.0
            c = 1.0
            p = 0.0
            early = False
            i = m - 1
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    early = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                if want_vectors:
                    for k in range(n):
                        f = z[k, i + 1]
                        z[k, i + 1] = s * z[k, i] + c * f
                        z[k, i] = c * z[k, i] - s * f
                i -= 1
            if early:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return 0


def check_symmetric(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if m.size and np.max(np.abs(m - m.T)) > SYMMETRY_TOL * max(1.0, np.max(np.abs(m))):
        raise ValueError("matrix is not symmetric")
    return m


def _solve(m: np.ndarray, want_vectors: bool):
    z = np.array(check_symmetric(m), dtype=np.float64, order="C", copy=True)
    d, e = _tred2(z, want_vectors)
    if _tqli(d, e, z, want_vectors, OFFDIAG_TOL, MAX_SWEEPS) != 0:
        raise EigenError("eigensolver failed to converge")
    order = np.argsort(d, kind="stable")
    return d[order], (z[:, order] if want_vectors else None)


def eigvalsh(m: np.ndarray) -> np.ndarray:
    """All eigenvalues of a symmetric matrix, ascending."""
    return _solve(m, False)[0]


def eigh(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvectors as columns."""
    return _solve(m, True)
