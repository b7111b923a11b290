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

"""Lyapunov operator L_X(Y) = X^T Y + Y X and its inverse.

The inverse is computed through the Kronecker form
P(X) = I (x) X^T + X^T (x) I, which satisfies P(X) vec(Y) = vec(L_X(Y)).
"""

import logging
from typing import Optional

import numpy as np
import scipy.linalg

from lqr_rpi.errors import DimensionError, NumericalError, SolverError, StabilityError
from lqr_rpi.matops import Matrix, kron, symmetrize, unvec, vec

HURWITZ_TOL = 1e-9

LOGGER = logging.getLogger(__name__)


def _check_square(matrix: Matrix, name: str) -> int:
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {matrix.shape}")
    return int(matrix.shape[0])


def spectral_abscissa(matrix: Matrix) -> float:
    """Return the largest real part of the eigenvalues of the matrix."""
    _check_square(matrix, "matrix")
    if not np.all(np.isfinite(matrix)):
        raise NumericalError("cannot compute eigenvalues of a non-finite matrix")
    try:
        eigenvalues = scipy.linalg.eigvals(matrix)
    except (scipy.linalg.LinAlgError, ValueError) as error:
        raise NumericalError(f"eigenvalue computation failed: {error}") from error
    return float(np.max(eigenvalues.real))


def is_hurwitz(matrix: Matrix, tol: float = HURWITZ_TOL) -> bool:
    """Check that all eigenvalues have real part < -tol."""
    return spectral_abscissa(matrix) < -tol


def lyap_apply(closed_loop: Matrix, sym: Matrix) -> Matrix:
    """Return X^T Y + Y X."""
    order = _check_square(closed_loop, "X")
    if sym.shape != (order, order):
        raise DimensionError(f"Y of shape {sym.shape} does not conform with X of order {order}")
    return symmetrize(closed_loop.T @ sym + sym @ closed_loop)


def kron_lyap_matrix(closed_loop: Matrix) -> Matrix:
    """Return P(X) = I (x) X^T + X^T (x) I."""
    order = _check_square(closed_loop, "X")
    identity = np.eye(order)
    return kron(identity, closed_loop.T) + kron(closed_loop.T, identity)


def _require_hurwitz(closed_loop: Matrix, tol: float) -> None:
    abscissa = spectral_abscissa(closed_loop)
    if abscissa >= -tol:
        raise StabilityError(f"matrix is not Hurwitz (spectral abscissa {abscissa:.6g})")


def lyap_solve(closed_loop: Matrix, weight: Matrix, hurwitz_tol: float = HURWITZ_TOL) -> Matrix:
    """Solve X^T Y + Y X = -Z for Y.

    The n^2 x n^2 system P(X) vec(Y) = -vec(Z) is solved with a dense LU
    factorization. X has to be Hurwitz.
    """
    order = _check_square(closed_loop, "X")
    if weight.shape != (order, order):
        raise DimensionError(f"Z of shape {weight.shape} does not conform with X of order {order}")
    _require_hurwitz(closed_loop, hurwitz_tol)
    try:
        solution = scipy.linalg.solve(kron_lyap_matrix(closed_loop), -vec(weight))
    except scipy.linalg.LinAlgError as error:
        raise SolverError(f"Lyapunov system is singular: {error}") from error
    return symmetrize(unvec(solution, order, order))


def lyap_inverse_norm(closed_loop: Matrix, hurwitz_tol: float = HURWITZ_TOL) -> float:
    """Return the spectral norm of P(X)^-1, i.e. the norm of L_X^-1 in Frobenius geometry."""
    _check_square(closed_loop, "X")
    _require_hurwitz(closed_loop, hurwitz_tol)
    singular_values = scipy.linalg.svdvals(kron_lyap_matrix(closed_loop))
    return float(1.0 / singular_values[-1])


def perturbation_bound(
    closed_loop: Matrix, perturbed_solution: Matrix, delta_x: Matrix, delta_z: Matrix
) -> float:
    """Bound on ||dY||_2 when X, Z are perturbed by dX, dZ.

    Returns (||dZ||_2 + 2 ||dX||_2 ||Y + dY||_2) ||H||_2 with H = L_X^-1(-I).
    """
    order = _check_square(closed_loop, "X")
    resolvent = lyap_solve(closed_loop, np.eye(order))
    return float(
        (
            np.linalg.norm(delta_z, 2)
            + 2.0 * np.linalg.norm(delta_x, 2) * np.linalg.norm(perturbed_solution, 2)
        )
        * np.linalg.norm(resolvent, 2)
    )


def scaled_perturbation_bound(
    closed_loop: Matrix,
    weight: Matrix,
    solution: Matrix,
    delta_x: Matrix,
    delta_z: Matrix,
) -> Optional[float]:
    """Bound on ||dY||_F under relative perturbations of size gamma.

    gamma is the smallest value satisfying ||dX||_F <= gamma ||X||_F and
    ||dZ||_F <= gamma ||Z||_F. Returns 8 gamma ||X||_F ||P(X)^-1||_2 ||Y||_F,
    or None if Z is zero or gamma ||X||_F ||P(X)^-1||_2 exceeds 1/4.
    """
    norm_x = float(np.linalg.norm(closed_loop, "fro"))
    norm_z = float(np.linalg.norm(weight, "fro"))
    if norm_z == 0.0 or norm_x == 0.0:
        return None
    gamma = max(
        float(np.linalg.norm(delta_x, "fro")) / norm_x,
        float(np.linalg.norm(delta_z, "fro")) / norm_z,
    )
    scale = gamma * norm_x * lyap_inverse_norm(closed_loop)
    if scale > 0.25:
        LOGGER.debug("scaled perturbation bound not applicable (%g > 1/4)", scale)
        return None
    return 8.0 * scale * float(np.linalg.norm(solution, "fro"))
