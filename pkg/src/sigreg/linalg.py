"""Dense linear-algebra primitives shared by every other module.

Matrices are plain 2-D C-contiguous float64 numpy arrays (row-major flat
storage).  Everything here is a pure function over immutable inputs; nothing
mutates its arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateBatchError,
    ShapeMismatchError,
    SketchDimensionError,
    SymmetryError,
)

Matrix = np.ndarray

# Divisor offset used by covariance(); kept bit-exact even though it is
# numerically negligible, so loss values match the reference arithmetic.
COVARIANCE_EPS = 1e-6


def as_matrix(values) -> Matrix:
    """Coerce to a 2-D C-contiguous float64 array with rows, cols >= 1."""
    m = np.ascontiguousarray(values, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeMismatchError(f"expected a 2-D matrix, got ndim={m.ndim}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeMismatchError(f"matrix must be at least 1x1, got {m.shape}")
    return m


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Dense matrix product with an explicit shape check."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(
            f"matmul: inner dimensions differ, "
            f"{a.shape[0]}x{a.shape[1]} @ {b.shape[0]}x{b.shape[1]}"
        )
    return a @ b


def center_columns(x: Matrix) -> Matrix:
    """Subtract each column's mean; every output column sums to ~0."""
    x = as_matrix(x)
    return x - x.mean(axis=0, keepdims=True)


def covariance(x_centered: Matrix) -> Matrix:
    """Sample covariance of a column-centered batch.

    The divisor is exactly ``N - 1 + 1e-6``; callers that need standard
    (N-1) semantics at these batch sizes lose nothing, and the loss
    definitions depend on this exact constant.
    """
    x = as_matrix(x_centered)
    n = x.shape[0]
    if n < 2:
        raise DegenerateBatchError(f"covariance needs at least 2 rows, got {n}")
    return (x.T @ x) / (n - 1 + COVARIANCE_EPS)


def frobenius_norm(m: Matrix) -> float:
    """sqrt of the sum of squared entries."""
    m = np.asarray(m, dtype=np.float64)
    return float(np.sqrt(np.sum(m * m)))


@dataclass(frozen=True)
class SketchMatrix:
    """Random projection with i.i.d. N(0, 1/c) entries, shape (k, c)."""

    k: int
    c: int
    entries: Matrix


def draw_sketch(rng, k: int, c: int) -> SketchMatrix:
    """Draw a k x c Gaussian sketch scaled by 1/sqrt(c).

    Down-projection only: requires 1 <= k <= c.  Drawing consumes exactly
    k*c values from the stream, so repeated calls on a replayed stream are
    bit-identical.
    """
    if not 1 <= k <= c:
        raise SketchDimensionError(f"sketch needs 1 <= k <= c, got k={k}, c={c}")
    entries = rng.normal((k, c)) / math.sqrt(c)
    return SketchMatrix(k=k, c=c, entries=entries)


def symmetric_eigenvalues(m: Matrix, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix, sorted descending.

    Cyclic Jacobi rotations over all (p, q) pairs, sweeping until every
    off-diagonal magnitude falls below 1e-12 times the Frobenius norm of
    the input.  Input asymmetry above 1e-10 (relative to the Frobenius
    norm) is rejected rather than silently symmetrized away.
    """
    a = as_matrix(m)
    n, cols = a.shape
    if n != cols:
        raise SymmetryError(f"eigensolver needs a square matrix, got {a.shape}")
    fro = frobenius_norm(a)
    if n == 1:
        return a[0, :1].copy()
    asym = float(np.max(np.abs(a - a.T)))
    if asym > 1e-10 * max(fro, np.finfo(np.float64).tiny):
        raise SymmetryError(
            f"matrix is not symmetric: max |A - A^T| = {asym:.3e} "
            f"vs Frobenius norm {fro:.3e}"
        )
    if fro == 0.0:
        return np.zeros(n)

    a = (a + a.T) / 2.0  # exact symmetry for the rotations; trace unchanged
    tol = 1e-12 * fro
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= tol:
                    continue
                rotated = True
                app = a[p, p]
                aqq = a[q, q]
                tau = (aqq - app) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + math.hypot(1.0, tau))
                else:
                    t = -1.0 / (-tau + math.hypot(1.0, tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                # closed-form pivot block avoids accumulating rotation noise
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = 0.0
                a[q, p] = 0.0
        if not rotated:
            break
    else:
        raise RuntimeError(f"Jacobi failed to converge in {max_sweeps} sweeps")

    return np.sort(np.diag(a))[::-1].copy()
