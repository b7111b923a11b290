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

"""Exact (Kleinman) and robust policy iteration with disturbance injection.

An exact run alternates policy evaluation, which solves H(G_i, K_i) = 0 for
P_i, and policy improvement K_(i+1) = G_(i,22)^-1 G_(i,21). A robust run
perturbs the evaluation matrix G_i by a symmetric disturbance dG_i before
the improvement step and reports the input-to-state behaviour of the
resulting error sequence ||P_i - P*||_F.
"""

import concurrent.futures
import dataclasses
import logging
import math
from typing import Literal, Optional, Sequence

import numpy as np

from lqr_rpi.errors import SingularBlockError, StabilityError
from lqr_rpi.lyapunov import HURWITZ_TOL, is_hurwitz, lyap_solve
from lqr_rpi.matops import Matrix, smat, svec_dim, symmetrize
from lqr_rpi.riccati import LqrCost, LtiSystem, closed_loop_cost, optimal_gain

LOGGER = logging.getLogger(__name__)

SINGULAR_CONDITION = 1e12
ULTIMATE_WINDOW = 5
BOUNDEDNESS_FACTOR = 6.0
TAIL_FLOOR = 1e-6

CSV_COLUMNS = ("i", "err_to_opt", "delta_G_norm", "hurwitz", "P_norm")

DisturbanceMode = Literal["none", "fixed_norm", "decaying"]
DecayLaw = Literal["geometric", "inverse_square"]


@dataclasses.dataclass(frozen=True, eq=False)
class PiIterate:
    """One policy-iteration record.

    ``P`` is the value matrix of the gain K_i, ``K_next`` the gain K_(i+1)
    computed from ``G`` (plus the disturbance of a robust run) and
    ``stabilizing`` tells whether K_(i+1) is stabilizing for the true plant.
    """

    index: int
    P: Matrix
    K_next: Matrix
    G: Matrix
    stabilizing: bool
    delta_G_norm: float = 0.0
    err_to_opt: Optional[float] = None

    def csv_row(self) -> tuple[object, ...]:
        """Return the trace row (i, err_to_opt, delta_G_norm, hurwitz, ||P||_F)."""
        return (
            self.index,
            self.err_to_opt,
            self.delta_G_norm,
            int(self.stabilizing),
            float(np.linalg.norm(self.P, "fro")),
        )


@dataclasses.dataclass(frozen=True)
class DisturbanceSpec:
    """Law of the disturbances dG_i injected into a robust run.

    ``fixed_norm`` draws dG_i with ||dG_i||_F = norm_bound, ``decaying``
    with ||dG_i||_F = bound(i), where bound(i) is norm_bound * decay_rate^(i-1)
    (geometric) or norm_bound / (1 + i^2) (inverse_square).
    """

    mode: DisturbanceMode = "none"
    norm_bound: float = 0.0
    decay: DecayLaw = "geometric"
    decay_rate: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in ("none", "fixed_norm", "decaying"):
            raise ValueError(f"unknown disturbance mode '{self.mode}'")
        if self.decay not in ("geometric", "inverse_square"):
            raise ValueError(f"unknown decay law '{self.decay}'")
        if not self.norm_bound >= 0.0:
            raise ValueError(f"norm_bound must be non-negative, got {self.norm_bound}")
        if not 0.0 < self.decay_rate < 1.0:
            raise ValueError(f"decay_rate must be in (0, 1), got {self.decay_rate}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")

    def bound(self, index: int) -> float:
        """Frobenius norm of the disturbance injected at iteration index."""
        if self.mode == "none":
            return 0.0
        if self.mode == "fixed_norm":
            return self.norm_bound
        if self.decay == "inverse_square":
            return self.norm_bound / (1.0 + index**2)
        return self.norm_bound * self.decay_rate ** (index - 1)


@dataclasses.dataclass(frozen=True)
class IssReport:
    """Empirical input-to-state stability summary of a robust run."""

    sigma_hat: float
    error_trace: tuple[float, ...]
    ultimate_error: Optional[float]
    margins_ok: bool
    margin_violations: int = 0
    boundedness_ok: Optional[bool] = None
    status: str = "ok"

    @property
    def stabilizing_all(self) -> bool:
        """True if no generated gain lost stabilization."""
        return self.status == "ok"


def assemble_g(system: LtiSystem, cost: LqrCost, value: Matrix) -> Matrix:
    """Return G = [[Q + A^T P + P A, P B], [B^T P, R]]."""
    upper_left = cost.Q + system.A.T @ value + value @ system.A
    coupling = value @ system.B
    return symmetrize(np.block([[upper_left, coupling], [coupling.T, cost.R]]))


def policy_evaluate(
    system: LtiSystem, cost: LqrCost, gain: Matrix, hurwitz_tol: float = HURWITZ_TOL
) -> tuple[Matrix, Matrix]:
    """Return the value matrix P of the gain and the evaluation matrix G."""
    value = closed_loop_cost(system, cost, gain, hurwitz_tol)
    return value, assemble_g(system, cost, value)


def policy_improve(block: Matrix, m: int) -> Matrix:
    """Return G_22^-1 G_21 for G of order n+m."""
    order = block.shape[0]
    n = order - m
    lower_right = block[n:, n:]
    if np.linalg.cond(lower_right) > SINGULAR_CONDITION:
        raise SingularBlockError("lower-right block of G is singular")
    gain: Matrix = np.linalg.solve(lower_right, block[n:, :n])
    return gain


def _error(value: Matrix, p_star: Optional[Matrix]) -> Optional[float]:
    if p_star is None:
        return None
    return float(np.linalg.norm(value - p_star, "fro"))


def pi_exact_run(
    system: LtiSystem,
    cost: LqrCost,
    initial_gain: Matrix,
    tol: float = 1e-10,
    max_iter: int = 50,
    p_star: Optional[Matrix] = None,
    hurwitz_tol: float = HURWITZ_TOL,
) -> list[PiIterate]:
    """Run Kleinman's policy iteration until ||P_(i+1) - P_i||_F < tol.

    The run also stops as soon as the improved gain reproduces the evaluated
    one within tol, so a start at K* records the single iterate P_1 = P*.
    """
    cost.check_conforms(system)
    if not system.is_stabilizing(initial_gain, hurwitz_tol):
        raise StabilityError("initial gain is not stabilizing")
    iterates: list[PiIterate] = []
    gain = initial_gain
    for index in range(1, max_iter + 1):
        value, block = policy_evaluate(system, cost, gain, hurwitz_tol)
        evaluated_gain, gain = gain, policy_improve(block, system.m)
        iterate = PiIterate(
            index=index,
            P=value,
            K_next=gain,
            G=block,
            stabilizing=system.is_stabilizing(gain, hurwitz_tol),
            err_to_opt=_error(value, p_star),
        )
        iterates.append(iterate)
        step = (
            math.inf if len(iterates) < 2 else float(np.linalg.norm(iterates[-2].P - value, "fro"))
        )
        LOGGER.debug("exact iteration %i: ||dP||_F = %.3e", index, step)
        if step < tol or float(np.linalg.norm(gain - evaluated_gain, "fro")) < tol:
            break
    else:
        LOGGER.warning("exact policy iteration stopped after %i iterations", max_iter)
    return iterates


def make_disturbance(spec: DisturbanceSpec, index: int, order: int) -> Matrix:
    """Return the symmetric disturbance dG_index of the given order.

    The draw depends only on (seed, index): a symmetrized Gaussian matrix
    from a Philox stream keyed by both, rescaled to the target norm.
    """
    bound = spec.bound(index)
    if bound == 0.0:
        return np.zeros((order, order))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([spec.seed, index])))
    draw = symmetrize(rng.standard_normal((order, order)))
    result: Matrix = draw * (bound / float(np.linalg.norm(draw, "fro")))
    return result


def stability_margin(gain: Matrix, next_gain: Matrix, n: int, m: int) -> float:
    """Return a_i = (m (sqrt(n) + ||K_i||_2)^2 + m (sqrt(n) + ||K_(i+1)||_2)^2)^-1."""
    root_n = math.sqrt(n)
    return 1.0 / (
        m * (root_n + float(np.linalg.norm(gain, 2))) ** 2
        + m * (root_n + float(np.linalg.norm(next_gain, 2))) ** 2
    )


def _contraction_factor(errors: Sequence[float], ultimate: float) -> float:
    ratios = [
        after / before
        for before, after in zip(errors, errors[1:])
        if before > 2.0 * ultimate and before > 0.0
    ]
    return max(ratios, default=0.0)


def pi_robust_run(
    system: LtiSystem,
    cost: LqrCost,
    initial_gain: Matrix,
    spec: DisturbanceSpec,
    n_iter: int,
    p_star: Optional[Matrix] = None,
    hurwitz_tol: float = HURWITZ_TOL,
) -> tuple[list[PiIterate], IssReport]:
    """Run policy iteration with the disturbances dG_i of the given spec.

    A generated gain that is not stabilizing ends the run; the offending
    iterate is kept and the report status names it.
    """
    cost.check_conforms(system)
    if not system.is_stabilizing(initial_gain, hurwitz_tol):
        raise StabilityError("initial gain is not stabilizing")
    n, m = system.n, system.m
    iterates: list[PiIterate] = []
    margins: list[float] = []
    violations = 0
    status = "ok"
    gain = initial_gain
    for index in range(1, n_iter + 1):
        value, block = policy_evaluate(system, cost, gain, hurwitz_tol)
        disturbance = make_disturbance(spec, index, n + m)
        disturbance_norm = float(np.linalg.norm(disturbance, "fro"))
        try:
            next_gain = policy_improve(block + disturbance, m)
        except SingularBlockError:
            status = f"singular block at i={index}"
            LOGGER.warning("robust policy iteration: %s", status)
            break
        stabilizing = system.is_stabilizing(next_gain, hurwitz_tol)
        margin = stability_margin(gain, next_gain, n, m)
        margins.append(margin)
        if disturbance_norm < margin and not stabilizing:
            violations += 1
        iterates.append(
            PiIterate(
                index=index,
                P=value,
                K_next=next_gain,
                G=block + disturbance,
                stabilizing=stabilizing,
                delta_G_norm=disturbance_norm,
                err_to_opt=_error(value, p_star),
            )
        )
        LOGGER.debug(
            "robust iteration %i: ||dG||_F = %.3e, a_i = %.3e, err = %s",
            index,
            disturbance_norm,
            margin,
            iterates[-1].err_to_opt,
        )
        if not stabilizing:
            status = f"stability lost at i={index}"
            LOGGER.warning("robust policy iteration: %s", status)
            break
        gain = next_gain

    report = _iss_report(iterates, margins, violations, status)
    return iterates, report


def _iss_report(
    iterates: Sequence[PiIterate], margins: Sequence[float], violations: int, status: str
) -> IssReport:
    errors = tuple(it.err_to_opt for it in iterates if it.err_to_opt is not None)
    ultimate = max(errors[-ULTIMATE_WINDOW:]) if errors else None
    sigma_hat = _contraction_factor(errors, ultimate) if ultimate is not None else 0.0

    boundedness_ok: Optional[bool] = None
    on_schedule = all(
        it.delta_G_norm < margin / (1.0 + it.index**2) for it, margin in zip(iterates, margins)
    )
    if iterates and on_schedule:
        limit = BOUNDEDNESS_FACTOR * float(np.linalg.norm(iterates[0].P, "fro"))
        boundedness_ok = all(float(np.linalg.norm(it.P, "fro")) <= limit for it in iterates)

    return IssReport(
        sigma_hat=sigma_hat,
        error_trace=errors,
        ultimate_error=ultimate,
        margins_ok=violations == 0,
        margin_violations=violations,
        boundedness_ok=boundedness_ok,
        status=status,
    )


def robust_sweep(
    system: LtiSystem,
    cost: LqrCost,
    initial_gain: Matrix,
    scales: Sequence[float],
    seeds: Sequence[int],
    n_iter: int,
    p_star: Optional[Matrix] = None,
    jobs: int = 4,
) -> dict[tuple[float, int], IssReport]:
    """Run fixed-norm robust runs for every (scale, seed) pair in parallel."""
    specs = [
        DisturbanceSpec(mode="fixed_norm", norm_bound=scale, seed=seed)
        for scale in scales
        for seed in seeds
    ]
    with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as executor:
        futures = {
            (spec.norm_bound, spec.seed): executor.submit(
                pi_robust_run, system, cost, initial_gain, spec, n_iter, p_star
            )
            for spec in specs
        }
        return {key: future.result()[1] for key, future in futures.items()}


def one_step_map(
    system: LtiSystem, cost: LqrCost, value: Matrix, hurwitz_tol: float = HURWITZ_TOL
) -> Matrix:
    """Return P+ = L_(A(P))^-1(-Q - P B R^-1 B^T P) with A(P) = A - B R^-1 B^T P."""
    gain = optimal_gain(system, cost, value)
    return lyap_solve(system.closed_loop(gain), cost.stage_weight(gain), hurwitz_tol)


def estimate_contraction(
    system: LtiSystem,
    cost: LqrCost,
    p_star: Matrix,
    radius: float,
    n_samples: int = 200,
    seed: int = 0,
    hurwitz_tol: float = HURWITZ_TOL,
) -> float:
    """Estimate the one-step contraction factor of the exact map around P*.

    Samples P uniformly on the Frobenius sphere of the given radius around
    P* and returns max ||P+ - P*||_F / ||P - P*||_F. Samples whose closed
    loop A(P) is not Hurwitz are excluded and counted.
    """
    if radius == 0.0:
        return 0.0
    rng = np.random.default_rng(seed)
    dimension = svec_dim(system.n)
    sigma_hat = 0.0
    excluded = 0
    for _ in range(n_samples):
        direction = rng.standard_normal(dimension)
        offset = smat(direction * (radius / float(np.linalg.norm(direction))))
        value = p_star + offset
        if not is_hurwitz(system.closed_loop(optimal_gain(system, cost, value)), hurwitz_tol):
            excluded += 1
            continue
        mapped = one_step_map(system, cost, value, hurwitz_tol)
        sigma_hat = max(sigma_hat, float(np.linalg.norm(mapped - p_star, "fro")) / radius)
    if excluded:
        LOGGER.warning(
            "%i of %i samples at radius %g have a non-Hurwitz closed loop and were excluded",
            excluded,
            n_samples,
            radius,
        )
    return sigma_hat


def quadratic_tail_constant(errors: Sequence[float], scale: float) -> float:
    """Fit C in e_(i+1) <= C e_i^2 over the iterates with 1e-6 scale < e_i < 0.1 scale.

    Smaller errors are left out since their successors are at the round-off floor.
    """
    constants = [
        after / before**2
        for before, after in zip(errors, errors[1:])
        if TAIL_FLOOR * scale < before < 0.1 * scale
    ]
    return max(constants, default=0.0)
