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

"""Off-policy data-driven policy iteration from input/state trajectories.

One trajectory of the (possibly disturbed) plant is collected on the grid
t_j = j * dt. Its data matrices

  delta_xx[j] = svec(x x^T)(t_(j+1)) - svec(x x^T)(t_j)
  I_xx[j]     = integral of x (x) x over [t_j, t_(j+1)]
  I_xu[j]     = integral of x (x) u over [t_j, t_(j+1)]

are reused by every iteration: only the gain changes the least-squares
problem Theta(K) [svec(P); vec(K+)] = Xi(K).
"""

import dataclasses
import json
import logging
from typing import Any, Callable, Optional

import numpy as np
import numpy.typing as npt
import scipy.linalg

from lqr_rpi.errors import DimensionError, DivergenceError, StabilityError
from lqr_rpi.lyapunov import HURWITZ_TOL
from lqr_rpi.matops import Matrix, Vector, smat, svec, svec_dim, unvec, vec
from lqr_rpi.riccati import LqrCost, LtiSystem

LOGGER = logging.getLogger(__name__)

DEFAULT_SUBSTEPS = 20
DATA_FILES = ("delta_xx", "I_xx", "I_xu")
CSV_COLUMNS = ("i", "err_to_opt", "rank_ok", "hurwitz", "P_norm", "lsq_residual")


@dataclasses.dataclass(frozen=True, eq=False)
class SinusoidSignal:
    """Sum of sinusoids, amplitude * sum_j sin(omega_(c,j) t) on every channel c."""

    amplitude: float
    frequencies: Matrix
    seed: Optional[int] = None
    low: Optional[float] = None
    high: Optional[float] = None

    @classmethod
    def uniform(
        cls, amplitude: float, count: int, low: float, high: float, channels: int, seed: int
    ) -> "SinusoidSignal":
        """Sample count frequencies per channel uniformly from [low, high]."""
        if count < 1 or channels < 1:
            raise ValueError(f"need count >= 1 and channels >= 1, got {count}, {channels}")
        rng = np.random.default_rng(seed)
        return cls(amplitude, rng.uniform(low, high, size=(channels, count)), seed, low, high)

    @property
    def channels(self) -> int:
        """Number of output channels."""
        return int(self.frequencies.shape[0])

    @property
    def count(self) -> int:
        """Number of sinusoids per channel."""
        return int(self.frequencies.shape[1])

    def __call__(self, time: float) -> Vector:
        result: Vector = self.amplitude * np.sin(self.frequencies * time).sum(axis=1)
        return result

    def describe(self) -> dict[str, Any]:
        """Return the reproducibility metadata of the signal."""
        return {
            "amplitude": self.amplitude,
            "count": self.count,
            "channels": self.channels,
            "low": self.low,
            "high": self.high,
            "seed": self.seed,
        }


@dataclasses.dataclass(frozen=True, eq=False)
class TrajectoryData:
    """Data matrices of one trajectory plus the sampled states x(t_j), j = 0..M."""

    delta_xx: Matrix
    I_xx: Matrix
    I_xu: Matrix
    states: Matrix
    dt: float
    metadata: dict[str, Any] = dataclasses.field(default_factory=dict)

    def __post_init__(self) -> None:
        rows = self.delta_xx.shape[0]
        n = self.n
        if self.I_xx.shape != (rows, n * n) or self.states.shape != (rows + 1, n):
            raise DimensionError("trajectory data matrices do not conform")
        if self.delta_xx.shape[1] != svec_dim(n) or self.I_xu.shape[0] != rows:
            raise DimensionError("trajectory data matrices do not conform")
        if self.I_xu.shape[1] % n != 0:
            raise DimensionError(f"I_xu has {self.I_xu.shape[1]} columns, not a multiple of {n}")

    @property
    def M(self) -> int:
        """Number of sampling intervals."""
        return int(self.delta_xx.shape[0])

    @property
    def n(self) -> int:
        """State dimension."""
        return int(self.states.shape[1])

    @property
    def m(self) -> int:
        """Input dimension."""
        return int(self.I_xu.shape[1]) // self.n

    def head(self, rows: int) -> "TrajectoryData":
        """Return the data of the first rows sampling intervals."""
        return TrajectoryData(
            self.delta_xx[:rows],
            self.I_xx[:rows],
            self.I_xu[:rows],
            self.states[: rows + 1],
            self.dt,
            dict(self.metadata),
        )

    def save(self, prefix: str) -> list[str]:
        """Write the three data matrices as CSV plus a JSON sidecar; return the file names."""
        filenames = []
        for name, matrix in zip(DATA_FILES, (self.delta_xx, self.I_xx, self.I_xu)):
            filename = f"{prefix}{name}.csv"
            np.savetxt(filename, matrix, fmt="%.17g", delimiter=",")
            filenames.append(filename)
        sidecar = {
            "M": self.M,
            "dt": self.dt,
            "n": self.n,
            "m": self.m,
            "states": self.states.tolist(),
            "metadata": self.metadata,
        }
        filename = f"{prefix}data.json"
        with open(filename, "w", encoding="utf-8") as sidecar_file:
            json.dump(sidecar, sidecar_file, indent=2, sort_keys=True)
            sidecar_file.write("\n")
        filenames.append(filename)
        return filenames

    @classmethod
    def load(cls, prefix: str) -> "TrajectoryData":
        """Read data written by save."""
        with open(f"{prefix}data.json", encoding="utf-8") as sidecar_file:
            sidecar = json.load(sidecar_file)
        delta_xx, i_xx, i_xu = (
            np.loadtxt(f"{prefix}{name}.csv", delimiter=",", ndmin=2) for name in DATA_FILES
        )
        return cls(
            delta_xx,
            i_xx,
            i_xu,
            np.array(sidecar["states"], dtype=np.float64, ndmin=2),
            float(sidecar["dt"]),
            sidecar["metadata"],
        )


@dataclasses.dataclass(frozen=True, eq=False)
class DataDrivenIterate:
    """One data-driven iteration: estimates of P_i and K_(i+1)."""

    index: int
    P_hat: Matrix
    K_hat_next: Matrix
    lsq_residual: float
    rank_ok: bool
    theta_cond: float
    err_to_opt: Optional[float] = None
    stabilizing: Optional[bool] = None

    def csv_row(self) -> tuple[object, ...]:
        """Return the trace row (i, err_to_opt, rank_ok, hurwitz, ||P||_F, residual)."""
        return (
            self.index,
            self.err_to_opt,
            int(self.rank_ok),
            None if self.stabilizing is None else int(self.stabilizing),
            float(np.linalg.norm(self.P_hat, "fro")),
            self.lsq_residual,
        )


def rk4_step(
    rhs: Callable[[float, Vector], Vector], time: float, state: Vector, step: float
) -> Vector:
    """Advance state by one classical fourth-order Runge-Kutta step."""
    k1 = rhs(time, state)
    k2 = rhs(time + 0.5 * step, state + 0.5 * step * k1)
    k3 = rhs(time + 0.5 * step, state + 0.5 * step * k2)
    k4 = rhs(time + step, state + step * k3)
    result: Vector = state + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return result


def simulate_collect(
    system: LtiSystem,
    u: SinusoidSignal,
    w: Optional[SinusoidSignal],
    x0: npt.ArrayLike,
    samples: int,
    dt: float,
    substeps: int = DEFAULT_SUBSTEPS,
) -> TrajectoryData:
    """Simulate dx/dt = A x + B u + w and collect the data matrices.

    The running integrals of x (x) x and x (x) u are part of the integrated
    state, so they are advanced by the same RK4 steps (of size dt/substeps)
    as the plant itself. w=None simulates the nominal plant.
    """
    if dt <= 0.0 or samples < 1 or substeps < 1:
        raise ValueError(
            f"need dt > 0, samples >= 1, substeps >= 1 (got {dt}, {samples}, {substeps})"
        )
    n, m = system.n, system.m
    if u.channels != m:
        raise DimensionError(f"input signal has {u.channels} channels, plant has {m} inputs")
    if w is not None and w.channels != n:
        raise DimensionError(f"disturbance has {w.channels} channels, plant has {n} states")
    initial = np.asarray(x0, dtype=np.float64).ravel()
    if initial.size != n:
        raise DimensionError(f"x0 has {initial.size} entries, plant has {n} states")

    def rhs(time: float, augmented: Vector) -> Vector:
        state = augmented[:n]
        control = u(time)
        derivative = system.A @ state + system.B @ control
        if w is not None:
            derivative = derivative + w(time)
        return np.concatenate([derivative, np.kron(state, state), np.kron(state, control)])

    step = dt / substeps
    states = np.zeros((samples + 1, n))
    i_xx = np.zeros((samples, n * n))
    i_xu = np.zeros((samples, n * m))
    states[0] = initial
    for row in range(samples):
        augmented = np.concatenate([states[row], np.zeros(n * n + n * m)])
        for substep in range(substeps):
            augmented = rk4_step(rhs, row * dt + substep * step, augmented, step)
        if not np.all(np.isfinite(augmented)):
            raise DivergenceError((row + 1) * dt)
        states[row + 1] = augmented[:n]
        i_xx[row] = augmented[n : n + n * n]
        i_xu[row] = augmented[n + n * n :]

    lifted = np.array([svec(np.outer(state, state)) for state in states])
    metadata: dict[str, Any] = {"substeps": substeps, "input": u.describe()}
    metadata["disturbance"] = None if w is None else w.describe()
    LOGGER.debug("collected %i samples with dt = %g, %i substeps", samples, dt, substeps)
    return TrajectoryData(np.diff(lifted, axis=0), i_xx, i_xu, states, dt, metadata)


def rank_condition(data: TrajectoryData, tol: Optional[float] = None) -> bool:
    """Check rank([I_xx, I_xu]) == n(n+1)/2 + m n.

    Singular values count when they exceed tol * sigma_max; the default tol
    is max(M, n0) * machine epsilon.
    """
    required = svec_dim(data.n) + data.n * data.m
    if tol is None:
        tol = max(data.M, required) * float(np.finfo(np.float64).eps)
    stacked = np.hstack([data.I_xx, data.I_xu])
    singular_values = scipy.linalg.svdvals(stacked)
    if singular_values.size == 0 or singular_values[0] == 0.0:
        return False
    rank = int(np.count_nonzero(singular_values > tol * singular_values[0]))
    return rank == required


def build_theta_xi(data: TrajectoryData, cost: LqrCost, gain: Matrix) -> tuple[Matrix, Vector]:
    """Assemble Theta(K) = [delta_xx, -2 I_xx (I (x) K^T R) - 2 I_xu (I (x) R)]
    and Xi(K) = -I_xx vec(Q + K^T R K)."""
    n, m = data.n, data.m
    if gain.shape != (m, n) or (cost.n, cost.m) != (n, m):
        raise DimensionError(f"gain {gain.shape} or cost ({cost.n}, {cost.m}) do not match data")
    identity = np.eye(n)
    gain_block = -2.0 * data.I_xx @ np.kron(identity, gain.T @ cost.R) - 2.0 * data.I_xu @ np.kron(
        identity, cost.R
    )
    theta = np.hstack([data.delta_xx, gain_block])
    xi: Vector = -data.I_xx @ vec(cost.stage_weight(gain))
    return theta, xi


def pack_solution(value: Matrix, gain: Matrix) -> Vector:
    """Return [svec(P); vec(K)]."""
    return np.concatenate([svec(value), vec(gain)])


def unpack_solution(solution: Vector, n: int, m: int) -> tuple[Matrix, Matrix]:
    """Split [svec(P); vec(K)] into P (n x n) and K (m x n)."""
    split = svec_dim(n)
    if solution.size != split + n * m:
        raise DimensionError(f"solution has {solution.size} entries, expected {split + n * m}")
    return smat(solution[:split]), unvec(solution[split:], m, n)


def pi_data_step(
    data: TrajectoryData,
    cost: LqrCost,
    gain: Matrix,
    index: int = 1,
    rank_ok: Optional[bool] = None,
    rank_tol: Optional[float] = None,
) -> DataDrivenIterate:
    """Solve Theta(K) y = Xi(K) in the minimum-norm least-squares sense."""
    if rank_ok is None:
        rank_ok = rank_condition(data, rank_tol)
        if not rank_ok:
            LOGGER.warning("rank condition does not hold; the estimate is not unique")
    theta, xi = build_theta_xi(data, cost, gain)
    cutoff = rank_tol
    if cutoff is None:
        cutoff = max(theta.shape) * float(np.finfo(np.float64).eps)
    solution, _, _, singular_values = scipy.linalg.lstsq(
        theta, xi, cond=cutoff, lapack_driver="gelsd"
    )
    smallest = float(singular_values[-1]) if singular_values.size else 0.0
    theta_cond = float(singular_values[0]) / smallest if smallest > 0.0 else float("inf")
    value, next_gain = unpack_solution(solution, data.n, data.m)
    return DataDrivenIterate(
        index=index,
        P_hat=value,
        K_hat_next=next_gain,
        lsq_residual=float(np.linalg.norm(theta @ solution - xi)),
        rank_ok=rank_ok,
        theta_cond=theta_cond,
    )


def pi_data_iterate(
    data: TrajectoryData,
    cost: LqrCost,
    initial_gain: Matrix,
    n_iter: int,
    p_star: Optional[Matrix] = None,
    system: Optional[LtiSystem] = None,
    rank_tol: Optional[float] = None,
    hurwitz_tol: float = HURWITZ_TOL,
) -> list[DataDrivenIterate]:
    """Iterate pi_data_step on one fixed dataset.

    With the true system given, every generated gain is checked for
    stabilization (for diagnostics only; the iteration never uses A, B).
    """
    rank_ok = rank_condition(data, rank_tol)
    if not rank_ok:
        LOGGER.warning("rank condition does not hold; estimates are not unique")
    iterates: list[DataDrivenIterate] = []
    gain = initial_gain
    for index in range(1, n_iter + 1):
        iterate = pi_data_step(data, cost, gain, index, rank_ok, rank_tol)
        error = None if p_star is None else float(np.linalg.norm(iterate.P_hat - p_star, "fro"))
        stabilizing = (
            None if system is None else system.is_stabilizing(iterate.K_hat_next, hurwitz_tol)
        )
        iterate = dataclasses.replace(iterate, err_to_opt=error, stabilizing=stabilizing)
        iterates.append(iterate)
        LOGGER.debug(
            "data-driven iteration %i: residual %.3e, err = %s, stabilizing = %s",
            index,
            iterate.lsq_residual,
            error,
            stabilizing,
        )
        gain = iterate.K_hat_next
    return iterates


def pi_data_run(
    system: LtiSystem,
    cost: LqrCost,
    initial_gain: Matrix,
    u: SinusoidSignal,
    w: Optional[SinusoidSignal],
    x0: npt.ArrayLike,
    samples: int,
    dt: float,
    substeps: int,
    n_iter: int,
    p_star: Optional[Matrix] = None,
    rank_tol: Optional[float] = None,
) -> list[DataDrivenIterate]:
    """Collect one dataset from the plant and run the data-driven iteration on it."""
    cost.check_conforms(system)
    if not system.is_stabilizing(initial_gain):
        raise StabilityError("initial gain is not stabilizing")
    data = simulate_collect(system, u, w, x0, samples, dt, substeps)
    return pi_data_iterate(data, cost, initial_gain, n_iter, p_star, system, rank_tol)
