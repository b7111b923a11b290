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

"""Plant and cost types, the algebraic Riccati equation and its ground-truth solver."""

import dataclasses
import logging
import math
from typing import Optional

import numpy as np
import numpy.typing as npt
import scipy.integrate
import scipy.linalg

from lqr_rpi.errors import (
    ControllabilityError,
    ConvergenceError,
    DefinitenessError,
    DimensionError,
    NumericalError,
    ObservabilityError,
    StabilityError,
    StabilizationError,
)
from lqr_rpi.lyapunov import HURWITZ_TOL, is_hurwitz, lyap_solve
from lqr_rpi.matops import Matrix, as_matrix, min_eigenvalue, numerical_rank, symmetrize

LOGGER = logging.getLogger(__name__)

Q_PSD_TOL = 1e-10
STALL_FACTOR = 1e4


def controllability_matrix(drift: Matrix, input_map: Matrix) -> Matrix:
    """Return [B, AB, ..., A^(n-1) B]."""
    blocks = [input_map]
    for _ in range(drift.shape[0] - 1):
        blocks.append(drift @ blocks[-1])
    return np.hstack(blocks)


@dataclasses.dataclass(frozen=True, eq=False)
class LtiSystem:
    """Controllable plant dx/dt = A x + B u."""

    A: Matrix
    B: Matrix

    def __post_init__(self) -> None:
        drift = as_matrix(self.A, "A")
        input_map = as_matrix(self.B, "B")
        if drift.shape[0] != drift.shape[1]:
            raise DimensionError(f"A must be square, got shape {drift.shape}")
        if input_map.shape[0] != drift.shape[0]:
            raise DimensionError(
                f"B has {input_map.shape[0]} rows, but A has order {drift.shape[0]}"
            )
        object.__setattr__(self, "A", drift)
        object.__setattr__(self, "B", input_map)
        rank = numerical_rank(controllability_matrix(drift, input_map))
        if rank != self.n:
            raise ControllabilityError(
                f"(A, B) is not controllable: controllability matrix has rank {rank} < {self.n}"
            )

    @property
    def n(self) -> int:
        """State dimension."""
        return int(self.A.shape[0])

    @property
    def m(self) -> int:
        """Input dimension."""
        return int(self.B.shape[1])

    def closed_loop(self, gain: Matrix) -> Matrix:
        """Return A - B K."""
        if gain.shape != (self.m, self.n):
            raise DimensionError(f"gain must have shape {(self.m, self.n)}, got {gain.shape}")
        result: Matrix = self.A - self.B @ gain
        return result

    def is_stabilizing(self, gain: Matrix, tol: float = HURWITZ_TOL) -> bool:
        """Check if A - B K is Hurwitz."""
        return is_hurwitz(self.closed_loop(gain), tol)


@dataclasses.dataclass(frozen=True, eq=False)
class LqrCost:
    """Quadratic cost with state weight Q >= 0 and input weight R > 0."""

    Q: Matrix
    R: Matrix

    def __post_init__(self) -> None:
        state_weight = symmetrize(self.Q)
        input_weight = symmetrize(self.R)
        object.__setattr__(self, "Q", state_weight)
        object.__setattr__(self, "R", input_weight)
        if min_eigenvalue(input_weight) <= 0.0:
            raise DefinitenessError("R must be positive definite")
        if min_eigenvalue(state_weight) < -Q_PSD_TOL:
            raise DefinitenessError("Q must be positive semidefinite")

    @property
    def n(self) -> int:
        """State dimension."""
        return int(self.Q.shape[0])

    @property
    def m(self) -> int:
        """Input dimension."""
        return int(self.R.shape[0])

    def check_conforms(self, system: LtiSystem) -> None:
        """Raise DimensionError unless Q, R match the dimensions of the system."""
        if (self.n, self.m) != (system.n, system.m):
            raise DimensionError(
                f"cost weights have dimensions (n={self.n}, m={self.m}),"
                f" system has (n={system.n}, m={system.m})"
            )

    def check_observable(self, system: LtiSystem) -> None:
        """Raise ObservabilityError unless (A, Q^(1/2)) is observable."""
        self.check_conforms(system)
        eigenvalues, eigenvectors = scipy.linalg.eigh(self.Q)
        root = eigenvectors @ np.diag(np.sqrt(np.clip(eigenvalues, 0.0, None))) @ eigenvectors.T
        rank = numerical_rank(controllability_matrix(system.A.T, root.T))
        if rank != system.n:
            raise ObservabilityError(
                f"(A, Q^(1/2)) is not observable: observability matrix has rank {rank}"
            )

    def stage_weight(self, gain: Matrix) -> Matrix:
        """Return Q + K^T R K."""
        return symmetrize(self.Q + gain.T @ self.R @ gain)


@dataclasses.dataclass(frozen=True, eq=False)
class AreSolution:
    """Stabilizing solution of the algebraic Riccati equation."""

    p_star: Matrix
    k_star: Matrix
    residual_norm: float
    iterations: int


def optimal_gain(system: LtiSystem, cost: LqrCost, value: Matrix) -> Matrix:
    """Return R^-1 B^T P."""
    gain: Matrix = scipy.linalg.solve(cost.R, system.B.T @ value, assume_a="pos")
    return gain


def are_residual(system: LtiSystem, cost: LqrCost, value: Matrix) -> Matrix:
    """Return A^T P + P A - P B R^-1 B^T P + Q."""
    cost.check_conforms(system)
    if value.shape != (system.n, system.n):
        raise DimensionError(f"P must have shape {(system.n, system.n)}, got {value.shape}")
    return symmetrize(
        system.A.T @ value
        + value @ system.A
        - value @ system.B @ optimal_gain(system, cost, value)
        + cost.Q
    )


def closed_loop_cost(
    system: LtiSystem, cost: LqrCost, gain: Matrix, hurwitz_tol: float = HURWITZ_TOL
) -> Matrix:
    """Return P_K, the solution of L_(A-BK)(P) = -(Q + K^T R K), for u = -K x."""
    closed_loop = system.closed_loop(gain)
    if not is_hurwitz(closed_loop, hurwitz_tol):
        raise StabilityError("gain is not stabilizing")
    return lyap_solve(closed_loop, cost.stage_weight(gain), hurwitz_tol)


def solve_are(
    system: LtiSystem,
    cost: LqrCost,
    initial_gain: Optional[Matrix] = None,
    tol: float = 1e-12,
    max_iter: int = 50,
    hurwitz_tol: float = HURWITZ_TOL,
) -> AreSolution:
    """Solve the ARE by running Kleinman's iteration to a tight tolerance.

    The iteration stops once ||P_(i+1) - P_i||_F < tol * max(1, ||P_(i+1)||_F), or
    earlier when the steps stop shrinking within STALL_FACTOR of that threshold.
    Without an initial gain, one is computed by find_stabilizing_gain.
    """
    cost.check_conforms(system)
    if tol <= 0.0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    if initial_gain is None:
        initial_gain = find_stabilizing_gain(system, hurwitz_tol)
    if not system.is_stabilizing(initial_gain, hurwitz_tol):
        raise StabilityError("initial gain is not stabilizing")

    value = closed_loop_cost(system, cost, initial_gain, hurwitz_tol)
    iterations = 0
    previous_step = math.inf
    converged = False
    while not converged:
        if iterations >= max_iter:
            raise ConvergenceError(f"Kleinman iteration did not converge within {max_iter} steps")
        iterations += 1
        next_value = closed_loop_cost(system, cost, optimal_gain(system, cost, value), hurwitz_tol)
        step = float(np.linalg.norm(next_value - value, "fro"))
        value = next_value
        LOGGER.debug("Riccati iteration %i: ||dP||_F = %.3e", iterations, step)
        scale = max(1.0, float(np.linalg.norm(value, "fro")))
        # Steps that stop shrinking near the tolerance are at the round-off floor.
        converged = step < tol * scale or previous_step <= step < STALL_FACTOR * tol * scale
        previous_step = step

    gain = optimal_gain(system, cost, value)
    residual = float(np.linalg.norm(are_residual(system, cost, value), "fro"))
    if min_eigenvalue(value) <= 0.0 or not system.is_stabilizing(gain, hurwitz_tol):
        raise NumericalError("Riccati iteration ended in a non-stabilizing solution")
    LOGGER.info("ARE solved in %i iterations, residual %.3e", iterations, residual)
    return AreSolution(p_star=value, k_star=gain, residual_norm=residual, iterations=iterations)


def find_stabilizing_gain(
    system: LtiSystem,
    hurwitz_tol: float = HURWITZ_TOL,
    step: float = 1.0,
    max_horizon: float = 200.0,
) -> Matrix:
    """Return a gain K with A - B K Hurwitz.

    Stable plants get K = 0. Otherwise the Riccati differential equation of
    the surrogate cost Q = I, R = I is integrated from P = 0 in windows of
    the given length until B^T P is stabilizing.
    """
    n, m = system.n, system.m
    if is_hurwitz(system.A, hurwitz_tol):
        return np.zeros((m, n))

    input_gram = system.B @ system.B.T
    identity = np.eye(n)

    def riccati_rhs(_time: float, flat: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
        value = flat.reshape(n, n)
        derivative = system.A.T @ value + value @ system.A - value @ input_gram @ value + identity
        return derivative.ravel()

    value = np.zeros((n, n))
    horizon = 0.0
    while horizon < max_horizon:
        solution = scipy.integrate.solve_ivp(
            riccati_rhs, (0.0, step), value.ravel(), method="LSODA", rtol=1e-8, atol=1e-10
        )
        if not solution.success or not np.all(np.isfinite(solution.y[:, -1])):
            raise StabilizationError(f"Riccati integration failed: {solution.message}")
        value = symmetrize(solution.y[:, -1].reshape(n, n))
        horizon += step
        gain: Matrix = system.B.T @ value
        if system.is_stabilizing(gain, hurwitz_tol):
            LOGGER.debug("stabilizing gain found after horizon %g", horizon)
            return gain
    raise StabilizationError(f"no stabilizing gain found within horizon {max_horizon:g}")
