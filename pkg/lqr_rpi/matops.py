# Copyright (C) 2026, lqr-rpi developers
#
# Permission to use, copy, modify, and/or distribute this software for any
# purpose with or without fee is hereby granted, provided that the above
# copyright notice and this permission notice appear in all copies.
#
# THE SOFTWARE IS PROVIDED "AS IS" AND THE AUTHOR DISCLAIMS ALL WARRANTIES
# WITH REGARD TO THIS SOFTWARE INCLUDING ALL IMPLIED WARRANTIES OF
# MERCHANTABILITY AND FITNESS. IN NO EVENT SHALL THE AUTHOR BE LIABLE FOR
# ANY SPECIAL, DIRECT, INDIRECT, OR CONSEQUENTIAL DAMAGES OR ANY DAMAGES
# WHATSOEVER RESULTING FROM LOSS OF USE, DATA OR PROFITS, WHETHER IN AN
# ACTION OF CONTRACT, NEGLIGENCE OR OTHER TORTIOUS ACTION, ARISING OUT OF
# OR IN CONNECTION WITH THE USE OR PERFORMANCE OF THIS SOFTWARE.

"""Vectorization and quadratic-form primitives.

Symmetric matrices are plain float64 arrays that went through
:func:`symmetrize`. The half-vectorization :func:`svec` lists the upper
triangle row by row (y11, y12, ..., y1k, y22, ...) with off-diagonal
entries scaled by sqrt(2), so that ``svec(Y) @ svec(Z) == trace(Y @ Z)``.
This ordering is relied upon by :mod:`lqr_rpi.datadriven`.
"""

import math
from typing import Optional

import numpy as np
import numpy.typing as npt
import scipy.linalg

from lqr_rpi.errors import DimensionError

Matrix = npt.NDArray[np.float64]
Vector = npt.NDArray[np.float64]

SQRT2 = math.sqrt(2.0)


def as_matrix(value: npt.ArrayLike, name: str = "matrix") -> Matrix:
    """Convert the given value into a two-dimensional float64 array."""
    matrix = np.array(value, dtype=np.float64, ndmin=2)
    if matrix.ndim != 2:
        raise DimensionError(f"{name} must be two-dimensional, got shape {matrix.shape}")
    return matrix


def symmetrize(value: npt.ArrayLike) -> Matrix:
    """Return (X + X^T) / 2 for a square matrix X."""
    matrix = as_matrix(value)
    if matrix.shape[0] != matrix.shape[1] or matrix.shape[0] < 1:
        raise DimensionError(f"symmetric matrix must be square, got shape {matrix.shape}")
    result: Matrix = 0.5 * (matrix + matrix.T)
    return result


def svec_dim(order: int) -> int:
    """Length of svec(Y) for a symmetric matrix Y of the given order."""
    return order * (order + 1) // 2


def svec_order(length: int) -> int:
    """Return k with k(k+1)/2 == length or raise DimensionError."""
    order = (math.isqrt(8 * length + 1) - 1) // 2
    if order < 1 or svec_dim(order) != length:
        raise DimensionError(f"length {length} is not of the form k(k+1)/2")
    return order


def _svec_scale(order: int) -> tuple[tuple[npt.NDArray[np.intp], ...], Vector]:
    rows, cols = np.triu_indices(order)
    scale = np.where(rows == cols, 1.0, SQRT2)
    return (rows, cols), scale


def svec(sym: Matrix) -> Vector:
    """Half-vectorize a symmetric matrix with sqrt(2)-scaled off-diagonals."""
    index, scale = _svec_scale(sym.shape[0])
    result: Vector = sym[index] * scale
    return result


def smat(vector: npt.ArrayLike) -> Matrix:
    """Inverse of svec."""
    values = np.asarray(vector, dtype=np.float64).ravel()
    order = svec_order(values.size)
    (rows, cols), scale = _svec_scale(order)
    result = np.zeros((order, order))
    result[rows, cols] = values / scale
    result[cols, rows] = result[rows, cols]
    return result


def vec(matrix: npt.ArrayLike) -> Vector:
    """Stack the columns of the matrix top-to-bottom."""
    result: Vector = as_matrix(matrix).reshape(-1, order="F")
    return result


def unvec(vector: npt.ArrayLike, rows: int, cols: int) -> Matrix:
    """Inverse of vec for a rows x cols matrix."""
    values = np.asarray(vector, dtype=np.float64).ravel()
    if values.size != rows * cols:
        raise DimensionError(f"cannot reshape {values.size} entries into {rows}x{cols}")
    result: Matrix = values.reshape((rows, cols), order="F")
    return result


def kron(left: npt.ArrayLike, right: npt.ArrayLike) -> Matrix:
    """Kronecker product of two matrices."""
    result: Matrix = np.kron(as_matrix(left), as_matrix(right))
    return result


def quad_form_h(block: Matrix, gain: Matrix) -> Matrix:
    """Return [I, -Z^T] U [I; -Z] for U of order n+m and Z of shape m x n."""
    m, n = gain.shape
    if block.shape != (n + m, n + m):
        raise DimensionError(
            f"block of shape {block.shape} does not conform with gain of shape {gain.shape}"
        )
    lifting = np.vstack([np.eye(n), -gain])
    return symmetrize(lifting.T @ block @ lifting)


def min_eigenvalue(sym: Matrix) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    return float(scipy.linalg.eigvalsh(symmetrize(sym))[0])


def numerical_rank(matrix: Matrix, tol: Optional[float] = None) -> int:
    """Count singular values above tol * sigma_max.

    The default relative tolerance is max(rows, cols) * machine epsilon.
    """
    if matrix.size == 0:
        return 0
    singular_values = scipy.linalg.svdvals(matrix)
    sigma_max = float(singular_values[0])
    if sigma_max == 0.0:
        return 0
    if tol is None:
        tol = max(matrix.shape) * float(np.finfo(np.float64).eps)
    return int(np.count_nonzero(singular_values > tol * sigma_max))
