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

"""Test plant and cost types, the Riccati residual and the ground-truth solver."""

import math
import unittest

import numpy as np

from lqr_rpi.errors import (
    ControllabilityError,
    ConvergenceError,
    DefinitenessError,
    DimensionError,
    ObservabilityError,
    StabilityError,
)
from lqr_rpi.lyapunov import is_hurwitz
from lqr_rpi.matops import min_eigenvalue
from lqr_rpi.riccati import (
    LqrCost,
    LtiSystem,
    are_residual,
    closed_loop_cost,
    find_stabilizing_gain,
    solve_are,
)

from . import random_system, scalar_plant, stirred_tank


class TestTypes(unittest.TestCase):
    """
    This unittest class tests the invariants of LtiSystem and LqrCost.
    """

    def test_uncontrollable(self) -> None:
        """Test that B = 0 is rejected."""
        with self.assertRaisesRegex(ControllabilityError, "not controllable"):
            LtiSystem(np.array([[-21.0, -20.0], [9.0, 8.0]]), np.zeros((2, 2)))

    def test_dimension_mismatch(self) -> None:
        """Test that B with the wrong number of rows is rejected."""
        with self.assertRaises(DimensionError):
            LtiSystem(-np.eye(2), np.ones((3, 1)))

    def test_indefinite_r(self) -> None:
        """Test that a singular R is rejected."""
        with self.assertRaisesRegex(DefinitenessError, "R must be positive definite"):
            LqrCost(np.eye(1), np.zeros((1, 1)))

    def test_indefinite_q(self) -> None:
        """Test that an indefinite Q is rejected."""
        with self.assertRaisesRegex(DefinitenessError, "Q must be positive semidefinite"):
            LqrCost(np.diag([1.0, -1.0]), np.eye(1))

    def test_cost_symmetrized(self) -> None:
        """Test that the weights are symmetrized on construction."""
        cost = LqrCost(np.array([[2.0, 1.0], [0.0, 2.0]]), np.eye(1))
        np.testing.assert_array_equal(cost.Q, [[2.0, 0.5], [0.5, 2.0]])

    def test_observability(self) -> None:
        """Test the observability check of (A, Q^(1/2))."""
        system = LtiSystem(np.diag([1.0, 2.0]), np.ones((2, 1)))
        LqrCost(np.eye(2), np.eye(1)).check_observable(system)
        with self.assertRaises(ObservabilityError):
            LqrCost(np.diag([1.0, 0.0]), np.eye(1)).check_observable(system)

    def test_conforms(self) -> None:
        """Test that weights of the wrong size are rejected."""
        system, _ = stirred_tank()
        with self.assertRaises(DimensionError):
            LqrCost(np.eye(2), np.eye(1)).check_conforms(system)


class TestAreResidual(unittest.TestCase):
    """
    This unittest class tests the Riccati residual.
    """

    def test_scalar_root(self) -> None:
        """Test that p = sqrt(2) - 1 is a root for a = -1, b = q = r = 1."""
        system, cost = scalar_plant()
        residual = are_residual(system, cost, np.array([[math.sqrt(2.0) - 1.0]]))
        self.assertLess(abs(float(residual[0, 0])), 1e-12)

    def test_zero(self) -> None:
        """Test that P = 0 gives Q."""
        system, cost = stirred_tank()
        np.testing.assert_array_equal(are_residual(system, cost, np.zeros((2, 2))), cost.Q)


class TestSolveAre(unittest.TestCase):
    """
    This unittest class tests the Kleinman-based ARE solver.
    """

    def test_scalar(self) -> None:
        """Test p* = k* = sqrt(2) - 1 for a = -1, b = q = r = 1."""
        system, cost = scalar_plant()
        solution = solve_are(system, cost, np.zeros((1, 1)))
        self.assertAlmostEqual(float(solution.p_star[0, 0]), math.sqrt(2.0) - 1.0, delta=1e-10)
        self.assertAlmostEqual(float(solution.k_star[0, 0]), math.sqrt(2.0) - 1.0, delta=1e-10)

    def test_stirred_tank(self) -> None:
        """Test the residual of the stirred-tank solution."""
        system, cost = stirred_tank()
        solution = solve_are(system, cost, np.zeros((2, 2)))
        self.assertLess(solution.residual_norm, 1e-10)
        self.assertGreater(min_eigenvalue(solution.p_star), 0.0)
        self.assertTrue(system.is_stabilizing(solution.k_star))

    def test_invariant_to_initial_gain(self) -> None:
        """Test that P* does not depend on the stabilizing initial gain."""
        rng = np.random.default_rng(20)
        for index in range(20):
            system = random_system(rng, 2 + index % 4, 1 + index % 3)
            cost = LqrCost(np.eye(system.n), np.eye(system.m))
            first = solve_are(system, cost)
            second = solve_are(system, cost, 2.0 * first.k_star)
            scale = max(1.0, float(np.linalg.norm(first.p_star)))
            np.testing.assert_allclose(second.p_star, first.p_star, atol=1e-8 * scale)
            self.assertLess(first.residual_norm, 1e-8 * scale)

    def test_not_stabilizing(self) -> None:
        """Test that a destabilizing initial gain is rejected."""
        system = LtiSystem(np.array([[1.0]]), np.array([[1.0]]))
        with self.assertRaisesRegex(StabilityError, "not stabilizing"):
            solve_are(system, LqrCost(np.eye(1), np.eye(1)), np.array([[0.5]]))

    def test_max_iter(self) -> None:
        """Test that exceeding max_iter raises ConvergenceError."""
        system, cost = stirred_tank()
        with self.assertRaises(ConvergenceError):
            solve_are(system, cost, np.zeros((2, 2)), max_iter=1)

    def test_logging(self) -> None:
        """Test that a solved ARE is logged."""
        system, cost = scalar_plant()
        with self.assertLogs("lqr_rpi", level="INFO") as context_manager:
            solve_are(system, cost)
        self.assertIn("ARE solved", context_manager.output[-1])

    def test_closed_loop_cost(self) -> None:
        """Test P_K for the scalar plant with K = 0: -2p + 1 = 0."""
        system, cost = scalar_plant()
        np.testing.assert_allclose(closed_loop_cost(system, cost, np.zeros((1, 1))), [[0.5]])
        with self.assertRaises(StabilityError):
            closed_loop_cost(system, cost, np.array([[-2.0]]))


class TestFindStabilizingGain(unittest.TestCase):
    """
    This unittest class tests the automatic initial gain.
    """

    def test_hurwitz_fast_path(self) -> None:
        """Test that a Hurwitz plant gets K = 0."""
        system, _ = stirred_tank()
        np.testing.assert_array_equal(find_stabilizing_gain(system), np.zeros((2, 2)))

    def test_scalar_unstable(self) -> None:
        """Test a = b = 1."""
        system = LtiSystem(np.array([[1.0]]), np.array([[1.0]]))
        gain = find_stabilizing_gain(system)
        self.assertLess(1.0 - float(gain[0, 0]), 0.0)

    def test_double_integrator(self) -> None:
        """Test the double integrator."""
        system = LtiSystem(np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([[0.0], [1.0]]))
        self.assertTrue(is_hurwitz(system.closed_loop(find_stabilizing_gain(system))))

    def test_random_unstable(self) -> None:
        """Test random (mostly unstable) plants."""
        rng = np.random.default_rng(21)
        for index in range(20):
            system = random_system(rng, 2 + index % 4, 1 + index % 2)
            self.assertTrue(system.is_stabilizing(find_stabilizing_gain(system)))
