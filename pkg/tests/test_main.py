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

"""Test main function of lqr-rpi."""

import csv
import json
import math
import os
import tempfile
import unittest
import unittest.mock
from typing import Any

import numpy as np

from lqr_rpi.cli import main
from lqr_rpi.datadriven import DataDrivenIterate
from lqr_rpi.errors import ConvergenceError

from . import CONFIG_DIR, TEST_CONFIG_DIR

TMP_PREFIX = "lqr-rpi-"


def read_trace(filename: str) -> tuple[str, list[dict[str, str]]]:
    """Return the config hash comment and the rows of a CSV trace."""
    with open(filename, encoding="utf-8") as csv_file:
        comment = csv_file.readline()
        rows = list(csv.DictReader(csv_file))
    return comment, rows


def write_config(directory: str, config: dict[str, Any]) -> str:
    """Write a JSON configuration file and return its name."""
    filename = os.path.join(directory, "config.json")
    with open(filename, "w", encoding="utf-8") as config_file:
        json.dump(config, config_file)
    return filename


class TestMain(unittest.TestCase):
    """
    This unittest class tests the main function.
    """

    def test_solve_are(self) -> None:
        """Test solving the scalar ARE, whose solution is sqrt(2) - 1."""
        with tempfile.TemporaryDirectory(prefix=TMP_PREFIX) as tmpdir:
            prefix = os.path.join(tmpdir, "scalar-")
            args = ["are", "-c", os.path.join(CONFIG_DIR, "scalar-are.json"), "-o", prefix]
            with self.assertLogs("lqr_rpi", level="INFO") as context_manager:
                self.assertEqual(main(args), 0)
            self.assertIn("Execution time", context_manager.output[-1])
            comment, rows = read_trace(f"{prefix}are.csv")
            with open(f"{prefix}summary.jsonl", encoding="utf-8") as summary_file:
                summary = [json.loads(line) for line in summary_file]
            self.assertTrue(os.path.isfile(f"{prefix}config.yaml"))

        self.assertRegex(comment, "^# config-sha256: [0-9a-f]{64}\n$")
        values = {row["quantity"]: float(row["value"]) for row in rows}
        self.assertAlmostEqual(values["P"], math.sqrt(2.0) - 1.0, places=12)
        self.assertAlmostEqual(values["K"], math.sqrt(2.0) - 1.0, places=12)
        self.assertLess(values["residual"], 1e-10)
        self.assertEqual(len(summary), 1)
        self.assertEqual(summary[0]["mode"], "are")
        self.assertEqual(summary[0]["exit_code"], 0)
        self.assertEqual(comment.split()[-1], summary[0]["config_hash"])
        self.assertEqual(summary[0]["outputs"], [f"{prefix}are.csv", f"{prefix}config.yaml"])

    def test_pi_exact_scalar(self) -> None:
        """Test the first two exact iterates of the scalar plant from K1 = 0."""
        with tempfile.TemporaryDirectory(prefix=TMP_PREFIX) as tmpdir:
            prefix = tmpdir + "/"
            config = os.path.join(CONFIG_DIR, "scalar-pi-exact.json")
            self.assertEqual(main(["pi-exact", "-c", config, "-o", prefix]), 0)
            _, rows = read_trace(f"{prefix}pi-exact.csv")

        self.assertEqual(list(rows[0]), ["i", "err_to_opt", "delta_G_norm", "hurwitz", "P_norm"])
        self.assertEqual([row["i"] for row in rows[:2]], ["1", "2"])
        self.assertAlmostEqual(float(rows[0]["P_norm"]), 0.5, places=14)
        self.assertAlmostEqual(float(rows[1]["P_norm"]), 5.0 / 12.0, places=14)
        self.assertTrue(all(row["hurwitz"] == "1" for row in rows))
        self.assertLess(float(rows[-1]["err_to_opt"]), 1e-12)
        self.assertGreater(float(rows[0]["err_to_opt"]), float(rows[1]["err_to_opt"]))

    def test_pi_robust_without_disturbance(self) -> None:
        """Test that robust PI without disturbances reproduces exact PI."""
        tank = os.path.join(CONFIG_DIR, "stirred-tank.json")
        with tempfile.TemporaryDirectory(prefix=TMP_PREFIX) as tmpdir:
            exact = os.path.join(tmpdir, "exact-")
            self.assertEqual(main(["pi-exact", "-c", tank, "-o", exact]), 0)
            robust = os.path.join(tmpdir, "robust-")
            extra = write_config(tmpdir, {"n_iter": 8, "disturbance": {"mode": "none"}})
            self.assertEqual(main(["pi-robust", "-c", tank, "-c", extra, "-o", robust]), 0)
            _, exact_rows = read_trace(f"{exact}pi-exact.csv")
            _, robust_rows = read_trace(f"{robust}pi-robust.csv")

        self.assertEqual(len(robust_rows), 8)
        count = min(len(exact_rows), len(robust_rows))
        self.assertEqual(robust_rows[:count], exact_rows[:count])

    def test_pi_robust_fixed_norm(self) -> None:
        """Test robust PI on the stirred tank with small disturbances."""
        with tempfile.TemporaryDirectory(prefix=TMP_PREFIX) as tmpdir:
            prefix = tmpdir + "/"
            args = [
                "pi-robust",
                "-c",
                os.path.join(CONFIG_DIR, "stirred-tank.json"),
                "-c",
                os.path.join(CONFIG_DIR, "pi-robust.json"),
                "-o",
                prefix,
            ]
            self.assertEqual(main(args), 0)
            _, rows = read_trace(f"{prefix}pi-robust.csv")
            with open(f"{prefix}summary.jsonl", encoding="utf-8") as summary_file:
                summary = json.loads(summary_file.readline())

        self.assertEqual(len(rows), 30)
        for row in rows:
            self.assertAlmostEqual(float(row["delta_G_norm"]), 0.001, places=12)
            self.assertEqual(row["hurwitz"], "1")
        self.assertEqual(summary["details"]["status"], "ok")
        self.assertTrue(summary["stabilizing_all"])

    def test_pi_data(self) -> None:
        """Test data-driven PI on the stirred tank without noise."""
        with tempfile.TemporaryDirectory(prefix=TMP_PREFIX) as tmpdir:
            prefix = tmpdir + "/"
            args = [
                "pi-data",
                "-c",
                os.path.join(CONFIG_DIR, "stirred-tank.json"),
                "-c",
                os.path.join(CONFIG_DIR, "pi-data.json"),
                "-o",
                prefix,
            ]
            self.assertEqual(main(args), 0)
            _, rows = read_trace(f"{prefix}pi-data.csv")

        self.assertEqual(len(rows), 10)
        self.assertEqual(
            list(rows[0]), ["i", "err_to_opt", "rank_ok", "hurwitz", "P_norm", "lsq_residual"]
        )
        self.assertTrue(all(row["rank_ok"] == "1" and row["hurwitz"] == "1" for row in rows))
        self.assertLess(float(rows[-1]["err_to_opt"]), 1e-3)

    def test_pi_data_save_data(self) -> None:
        """Test that the collected trajectory can be saved next to the trace."""
        with tempfile.TemporaryDirectory(prefix=TMP_PREFIX) as tmpdir:
            prefix = tmpdir + "/"
            extra = write_config(
                tmpdir, {"mode": "pi-data", "n_iter": 2, "samples": 20, "save_data": True}
            )
            args = ["pi-data", "-c", os.path.join(CONFIG_DIR, "stirred-tank.json")]
            args += ["-c", os.path.join(CONFIG_DIR, "pi-data.json"), "-c", extra]
            self.assertEqual(main(args + ["-o", prefix]), 0)
            files = sorted(os.listdir(tmpdir))

        self.assertEqual(
            files,
            [
                "config.json",
                "config.yaml",
                "pi-data-I_xu.csv",
                "pi-data-I_xx.csv",
                "pi-data-data.json",
                "pi-data-delta_xx.csv",
                "pi-data.csv",
                "summary.jsonl",
            ],
        )

    def test_determinism(self) -> None:
        """Test that the same seed gives identical traces."""
        traces = []
        with tempfile.TemporaryDirectory(prefix=TMP_PREFIX) as tmpdir:
            extra = write_config(tmpdir, {"mode": "pi-data", "n_iter": 3, "samples": 30})
            for run in ("first", "second"):
                prefix = os.path.join(tmpdir, run, "")
                args = ["pi-data", "-c", os.path.join(CONFIG_DIR, "stirred-tank.json")]
                args += ["-c", os.path.join(CONFIG_DIR, "pi-data.json"), "-c", extra]
                self.assertEqual(main(args + ["--seed", "5", "-o", prefix]), 0)
                with open(f"{prefix}pi-data.csv", encoding="utf-8") as csv_file:
                    traces.append(csv_file.readlines())

        self.assertGreater(len(traces[0]), 2)
        self.assertEqual(traces[0][1:], traces[1][1:])

    def test_fig1(self) -> None:
        """Test that fig1 keeps every gain stabilizing and the noise ordering for three seeds."""
        config = os.path.join(CONFIG_DIR, "fig1.json")
        for seed in (0, 1, 2):
            with self.subTest(seed=seed), tempfile.TemporaryDirectory(prefix=TMP_PREFIX) as tmpdir:
                prefix = tmpdir + "/"
                args = ["fig1", "-c", config, "-j", "2", "--seed", str(seed), "-o", prefix]
                exit_code = main(args)
                traces = {
                    name: read_trace(os.path.join(tmpdir, name))[1]
                    for name in os.listdir(tmpdir)
                    if name.endswith(".csv")
                }
                with open(f"{prefix}summary.jsonl", encoding="utf-8") as summary_file:
                    summary = json.loads(summary_file.readline())

                self.assertEqual(exit_code, 0)
                self.assertEqual(summary["exit_code"], 0)
                self.assertTrue(summary["stabilizing_all"])
                self.assertEqual(summary["details"]["ordering"], {"near": True, "far": True})
                self.assertEqual(
                    sorted(traces),
                    [
                        "fig1-far-xi0.01.csv",
                        "fig1-far-xi0.5.csv",
                        "fig1-near-xi0.01.csv",
                        "fig1-near-xi0.5.csv",
                    ],
                )
                self.assertEqual(set(summary["details"]["cells"]), {n[5:-4] for n in traces})
                for rows in traces.values():
                    self.assertEqual(len(rows), 10)
                    self.assertEqual({row["hurwitz"] for row in rows}, {"1"})

    def test_existing_output(self) -> None:
        """Test that existing outputs are only overwritten with --force."""
        with tempfile.TemporaryDirectory(prefix=TMP_PREFIX) as tmpdir:
            args = ["are", "-c", os.path.join(CONFIG_DIR, "scalar-are.json"), "-o", tmpdir + "/"]
            self.assertEqual(main(args), 0)
            with self.assertLogs("lqr_rpi", level="ERROR") as context_manager:
                self.assertEqual(main(args), 2)
            self.assertIn("already exists", context_manager.output[-1])
            self.assertEqual(main(args + ["--force"]), 0)


class TestMainConfigErrors(unittest.TestCase):
    """
    This unittest class tests that main rejects broken configurations.
    """

    def assert_config_error(self, args: list[str], message: str) -> None:
        """Run main in a temporary directory and expect exit code 2 and an error log."""
        with tempfile.TemporaryDirectory(prefix=TMP_PREFIX) as tmpdir:
            with self.assertLogs("lqr_rpi", level="ERROR") as context_manager:
                self.assertEqual(main(args + ["-o", tmpdir + "/"]), 2)
        self.assertIn(message, context_manager.output[-1])

    def test_malformed(self) -> None:
        """Test a truncated JSON file."""
        config = os.path.join(TEST_CONFIG_DIR, "malformed.json")
        self.assert_config_error(["are", "-c", config], "Failed to parse configuration")

    def test_duplicate_key(self) -> None:
        """Test a JSON file with a duplicate key."""
        config = os.path.join(TEST_CONFIG_DIR, "duplicate-key.json")
        self.assert_config_error(["are", "-c", config], "Failed to parse configuration")

    def test_missing_file(self) -> None:
        """Test a configuration file that does not exist."""
        config = os.path.join(TEST_CONFIG_DIR, "non-existing.json")
        self.assert_config_error(["are", "-c", config], "Invalid configuration")

    def test_unknown_key(self) -> None:
        """Test that the unknown key is named and recorded in the summary log."""
        config = os.path.join(TEST_CONFIG_DIR, "unknown-key.json")
        with tempfile.TemporaryDirectory(prefix=TMP_PREFIX) as tmpdir:
            prefix = tmpdir + "/"
            with self.assertLogs("lqr_rpi", level="ERROR") as context_manager:
                self.assertEqual(main(["are", "-c", config, "-o", prefix]), 2)
            with open(f"{prefix}summary.jsonl", encoding="utf-8") as summary_file:
                record = json.loads(summary_file.readline())
            self.assertFalse(os.path.exists(f"{prefix}are.csv"))
        self.assertIn("tolerence", context_manager.output[-1])
        self.assertEqual(
            record,
            {
                "mode": "are",
                "error": "ConfigError",
                "message": "unknown keys for mode 'are': tolerence",
                "exit_code": 2,
            },
        )

    def test_zero_input(self) -> None:
        """Test that a plant with B = 0 is rejected as uncontrollable."""
        config = os.path.join(TEST_CONFIG_DIR, "zero-input.json")
        self.assert_config_error(["fig1", "-c", config], "not controllable")

    def test_destabilizing_gain(self) -> None:
        """Test that a non-stabilizing initial gain is rejected."""
        config = os.path.join(TEST_CONFIG_DIR, "destabilizing-gain.json")
        self.assert_config_error(["pi-exact", "-c", config], "'K1' is not stabilizing")

    def test_unobservable_cost(self) -> None:
        """Test that Q = 0 is rejected before the Riccati solver runs."""
        config = os.path.join(TEST_CONFIG_DIR, "unobservable.json")
        self.assert_config_error(["are", "-c", config], "not observable")

    def test_scalar_drift_matrix(self) -> None:
        """Test that a number given for system.A is a configuration error."""
        config = os.path.join(TEST_CONFIG_DIR, "scalar-a.json")
        self.assert_config_error(["pi-data", "-c", config], "'system.A' must be a non-empty list")

    def test_mode_mismatch(self) -> None:
        """Test running a configuration written for another mode."""
        config = os.path.join(CONFIG_DIR, "scalar-are.json")
        self.assert_config_error(["pi-data", "-c", config], "config is for mode 'are'")


class TestMainExitCodes(unittest.TestCase):
    """
    This unittest class tests the exit codes for numerical failures and regime violations.
    """

    @unittest.mock.patch("lqr_rpi.cli.solve_are")
    def test_numerical_failure(self, solve_are_mock: unittest.mock.MagicMock) -> None:
        """Test that a failing Riccati solver gives exit code 3."""
        solve_are_mock.side_effect = ConvergenceError("did not converge within 50 steps")
        with tempfile.TemporaryDirectory(prefix=TMP_PREFIX) as tmpdir:
            prefix = tmpdir + "/"
            args = ["are", "-c", os.path.join(CONFIG_DIR, "scalar-are.json"), "-o", prefix]
            with self.assertLogs("lqr_rpi", level="ERROR") as context_manager:
                self.assertEqual(main(args), 3)
            with open(f"{prefix}summary.jsonl", encoding="utf-8") as summary_file:
                record = json.loads(summary_file.readline())
        self.assertEqual(
            context_manager.output,
            ["ERROR:lqr_rpi.cli:are failed: did not converge within 50 steps"],
        )
        self.assertEqual(record["error"], "ConvergenceError")
        self.assertEqual(record["exit_code"], 3)
        solve_are_mock.assert_called_once()

    @unittest.mock.patch("lqr_rpi.datadriven.pi_data_iterate")
    def test_regime_violation(self, iterate_mock: unittest.mock.MagicMock) -> None:
        """Test that a non-stabilizing data-driven gain gives exit code 1."""
        iterate_mock.return_value = [
            DataDrivenIterate(1, np.eye(2), np.eye(2), 0.0, True, 1.0, 0.5, True),
            DataDrivenIterate(2, np.eye(2), -np.eye(2), 0.0, True, 1.0, 0.5, False),
        ]
        with tempfile.TemporaryDirectory(prefix=TMP_PREFIX) as tmpdir:
            prefix = tmpdir + "/"
            extra = write_config(tmpdir, {"mode": "pi-data", "n_iter": 2, "samples": 20})
            args = ["pi-data", "-c", os.path.join(CONFIG_DIR, "stirred-tank.json")]
            args += ["-c", os.path.join(CONFIG_DIR, "pi-data.json"), "-c", extra]
            with self.assertLogs("lqr_rpi", level="ERROR") as context_manager:
                self.assertEqual(main(args + ["-o", prefix]), 1)
            _, rows = read_trace(f"{prefix}pi-data.csv")
        self.assertIn("non-stabilizing gain", context_manager.output[-1])
        self.assertEqual([row["hurwitz"] for row in rows], ["1", "0"])
        iterate_mock.assert_called_once()
