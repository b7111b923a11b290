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

"""Command line front end: run solvers and experiments from configuration files."""

import argparse
import concurrent.futures
import csv
import dataclasses
import json
import logging
import os
import sys
import time
from typing import Any, Callable, Iterable, Optional, Sequence

import numpy as np
from ruamel.yaml.constructor import DuplicateKeyError
from ruamel.yaml.error import YAMLError

from lqr_rpi import __script_name__, __version__, datadriven, policy_iteration
from lqr_rpi.config import ExperimentConfig
from lqr_rpi.datadriven import DataDrivenIterate, SinusoidSignal
from lqr_rpi.errors import ConfigError, LqrError, NumericalError
from lqr_rpi.matops import Matrix
from lqr_rpi.riccati import LqrCost, LtiSystem, find_stabilizing_gain, solve_are

LOG_FORMAT = "%(asctime)s %(name)s %(levelname)s: %(message)s"
LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_REGIME_VIOLATION = 1
EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_FAILURE = 3

SEED_NAMES = ("input", "noise", "disturbance", "gain")
NEAR_GAIN_ATTEMPTS = 50

COMMANDS = {
    "are": "solve the algebraic Riccati equation",
    "pi-exact": "run exact (Kleinman) policy iteration",
    "pi-robust": "run policy iteration with injected evaluation errors",
    "pi-data": "run off-policy data-driven policy iteration on one trajectory",
    "fig1": "compare data-driven runs for two initial gains and two noise levels",
}


@dataclasses.dataclass
class RunSummary:
    """Outcome of one invocation, appended as JSON line to the summary log."""

    mode: str
    iterations: int
    final_err_to_opt: Optional[float]
    stabilizing_all: bool
    rank_ok: Optional[bool] = None
    wall_time: float = 0.0
    exit_code: int = EXIT_OK
    config_hash: str = ""
    outputs: list[str] = dataclasses.field(default_factory=list)
    details: dict[str, Any] = dataclasses.field(default_factory=dict)

    def to_json(self) -> str:
        """Return the summary as one line of JSON."""
        return json.dumps(dataclasses.asdict(self), sort_keys=True)


def duration_str(duration: float) -> str:
    """Return duration (in seconds) as human readable string."""
    if duration < 60:
        return f"{duration:.3f} seconds"
    minutes, seconds = divmod(duration, 60)
    hours, minutes = divmod(int(minutes), 60)
    if hours > 0:
        return f"{hours} h {minutes} min {seconds:.3f} s (= {duration:.3f} s)"
    return f"{minutes} min {seconds:.3f} s (= {duration:.3f} s)"


def format_value(value: object) -> str:
    """Format one CSV cell: floats in scientific notation with 17 significant digits."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(value)
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.16e}"
    return str(value)


def write_csv(
    filename: str, config_hash: str, header: Sequence[str], rows: Iterable[Sequence[object]]
) -> None:
    """Write a CSV trace preceded by a comment line carrying the config hash."""
    with open(filename, "w", encoding="utf-8", newline="") as csv_file:
        csv_file.write(f"# config-sha256: {config_hash}\n")
        writer = csv.writer(csv_file, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(value) for value in row])


def append_summary(filename: str, record: str) -> None:
    """Append one JSON record to the summary log."""
    with open(filename, "a", encoding="utf-8") as summary_file:
        summary_file.write(record + "\n")


def derive_seeds(seed: int) -> dict[str, int]:
    """Derive independent seeds for every random source from the master seed."""
    state = np.random.SeedSequence(seed).generate_state(len(SEED_NAMES))
    return {name: int(value) for name, value in zip(SEED_NAMES, state)}


def output_files(config: ExperimentConfig) -> list[str]:
    """Return the files (besides the summary log) that the configured run writes."""
    prefix = config["output"]
    mode = config.mode
    if mode == "fig1":
        files = [
            f"{prefix}fig1-{label}-xi{xi:g}.csv"
            for label in ("near", "far")
            for xi in config["xi"]
        ]
    else:
        files = [f"{prefix}{mode}.csv"]
    if config.get("save_data"):
        files += [f"{prefix}pi-data-{name}.csv" for name in datadriven.DATA_FILES]
        files.append(f"{prefix}pi-data-data.json")
    return files + [f"{prefix}config.yaml"]


def prepare_output(filenames: Sequence[str], force: bool) -> bool:
    """Create the output directory and refuse to overwrite files unless forced."""
    existing = [filename for filename in filenames if os.path.exists(filename)]
    if existing and not force:
        LOGGER.error("Output file '%s' already exists. Use --force to overwrite it.", existing[0])
        return False
    for directory in {os.path.dirname(filename) for filename in filenames}:
        if directory:
            os.makedirs(directory, exist_ok=True)
    return True


def initial_gain(
    config: ExperimentConfig, system: LtiSystem, key: str = "K1"
) -> tuple[Matrix, str]:
    """Return the configured initial gain (or an automatic one) and its source."""
    gain = config.gain(key)
    if gain is None:
        return find_stabilizing_gain(system, config["hurwitz_tol"]), "find_stabilizing_gain"
    if not system.is_stabilizing(gain, config["hurwitz_tol"]):
        raise ConfigError(f"'{key}' is not stabilizing: A - B {key} is not Hurwitz")
    return gain, "config"


def make_signal(
    block: dict[str, Any], channels: int, seed: int, amplitude: Optional[float] = None
) -> SinusoidSignal:
    """Build a sum-of-sinusoids signal from a configuration block."""
    return SinusoidSignal.uniform(
        amplitude=float(block["amplitude"] if amplitude is None else amplitude),
        count=int(block["count"]),
        low=float(block["low"]),
        high=float(block["high"]),
        channels=channels,
        seed=seed,
    )


def cmd_solve_are(config: ExperimentConfig, system: LtiSystem, cost: LqrCost) -> RunSummary:
    """Solve the ARE and write P*, K* and the residual norm."""
    gain = config.gain("K1")
    if gain is not None and not system.is_stabilizing(gain, config["hurwitz_tol"]):
        raise ConfigError("'K1' is not stabilizing: A - B K1 is not Hurwitz")
    solution = solve_are(
        system, cost, gain, config["tolerance"], config["max_iter"], config["hurwitz_tol"]
    )
    rows: list[tuple[object, ...]] = []
    for name, matrix in (("P", solution.p_star), ("K", solution.k_star)):
        for (row, col), value in np.ndenumerate(matrix):
            rows.append((name, row, col, float(value)))
    rows.append(("residual", None, None, solution.residual_norm))
    rows.append(("iterations", None, None, solution.iterations))
    filename = f"{config['output']}are.csv"
    write_csv(filename, config.config_hash(), ("quantity", "row", "col", "value"), rows)

    exit_code = EXIT_OK
    if solution.residual_norm >= config["residual_tol"]:
        LOGGER.error(
            "ARE residual %.3e exceeds the tolerance %.3e",
            solution.residual_norm,
            config["residual_tol"],
        )
        exit_code = EXIT_NUMERICAL_FAILURE
    return RunSummary(
        mode="are",
        iterations=solution.iterations,
        final_err_to_opt=0.0,
        stabilizing_all=True,
        exit_code=exit_code,
        outputs=[filename],
        details={"residual_norm": solution.residual_norm},
    )


def cmd_pi(config: ExperimentConfig, system: LtiSystem, cost: LqrCost) -> RunSummary:
    """Run exact policy iteration and write its trace."""
    gain, source = initial_gain(config, system)
    p_star = solve_are(system, cost, hurwitz_tol=config["hurwitz_tol"]).p_star
    iterates = policy_iteration.pi_exact_run(
        system, cost, gain, config["tolerance"], config["max_iter"], p_star, config["hurwitz_tol"]
    )
    filename = f"{config['output']}pi-exact.csv"
    write_csv(
        filename,
        config.config_hash(),
        policy_iteration.CSV_COLUMNS,
        (iterate.csv_row() for iterate in iterates),
    )
    stabilizing_all = all(iterate.stabilizing for iterate in iterates)
    return RunSummary(
        mode="pi-exact",
        iterations=len(iterates),
        final_err_to_opt=iterates[-1].err_to_opt,
        stabilizing_all=stabilizing_all,
        exit_code=EXIT_OK if stabilizing_all else EXIT_REGIME_VIOLATION,
        outputs=[filename],
        details={"K1": source},
    )


def cmd_pi_robust(config: ExperimentConfig, system: LtiSystem, cost: LqrCost) -> RunSummary:
    """Run robust policy iteration with injected disturbances and write its trace."""
    gain, source = initial_gain(config, system)
    seeds = derive_seeds(config["seed"])
    try:
        spec = policy_iteration.DisturbanceSpec(seed=seeds["disturbance"], **config["disturbance"])
    except ValueError as error:
        raise ConfigError(f"invalid 'disturbance': {error}") from error
    p_star = solve_are(system, cost, hurwitz_tol=config["hurwitz_tol"]).p_star
    iterates, report = policy_iteration.pi_robust_run(
        system, cost, gain, spec, config["n_iter"], p_star, config["hurwitz_tol"]
    )
    filename = f"{config['output']}pi-robust.csv"
    write_csv(
        filename,
        config.config_hash(),
        policy_iteration.CSV_COLUMNS,
        (iterate.csv_row() for iterate in iterates),
    )
    if not report.stabilizing_all:
        LOGGER.error("Robust policy iteration left the stabilizing regime: %s", report.status)
    return RunSummary(
        mode="pi-robust",
        iterations=len(iterates),
        final_err_to_opt=iterates[-1].err_to_opt if iterates else None,
        stabilizing_all=report.stabilizing_all,
        exit_code=EXIT_OK if report.stabilizing_all else EXIT_REGIME_VIOLATION,
        outputs=[filename],
        details={
            "K1": source,
            "status": report.status,
            "sigma_hat": report.sigma_hat,
            "ultimate_error": report.ultimate_error,
            "margins_ok": report.margins_ok,
            "margin_violations": report.margin_violations,
            "boundedness_ok": report.boundedness_ok,
            "disturbance_seed": spec.seed,
        },
    )


def cmd_pi_data(config: ExperimentConfig, system: LtiSystem, cost: LqrCost) -> RunSummary:
    """Collect one trajectory, run data-driven policy iteration on it and write its trace."""
    gain, source = initial_gain(config, system)
    seeds = derive_seeds(config["seed"])
    excitation = make_signal(config["input"], system.m, seeds["input"])
    noise = None
    if config["noise"] is not None:
        noise = make_signal(config["noise"], system.n, seeds["noise"])
    data = datadriven.simulate_collect(
        system,
        excitation,
        noise,
        config["x0"],
        config["samples"],
        config["dt"],
        config["substeps"],
    )
    outputs = []
    if config["save_data"]:
        outputs += data.save(f"{config['output']}pi-data-")
    p_star = solve_are(system, cost, hurwitz_tol=config["hurwitz_tol"]).p_star
    iterates = datadriven.pi_data_iterate(
        data,
        cost,
        gain,
        config["n_iter"],
        p_star,
        system,
        config["rank_tol"],
        config["hurwitz_tol"],
    )
    filename = f"{config['output']}pi-data.csv"
    write_csv(
        filename,
        config.config_hash(),
        datadriven.CSV_COLUMNS,
        (iterate.csv_row() for iterate in iterates),
    )
    stabilizing_all = all(iterate.stabilizing for iterate in iterates)
    if not stabilizing_all:
        LOGGER.error("Data-driven policy iteration generated a non-stabilizing gain.")
    return RunSummary(
        mode="pi-data",
        iterations=len(iterates),
        final_err_to_opt=iterates[-1].err_to_opt,
        stabilizing_all=stabilizing_all,
        rank_ok=iterates[0].rank_ok,
        exit_code=EXIT_OK if stabilizing_all else EXIT_REGIME_VIOLATION,
        outputs=outputs + [filename],
        details={"K1": source, "seeds": seeds, "lsq_residual": iterates[-1].lsq_residual},
    )


def near_gain(
    system: LtiSystem, optimal: Matrix, scale: float, seed: int, hurwitz_tol: float
) -> Matrix:
    """Return K* plus a seeded perturbation of spectral norm scale * ||K*||_2.

    The perturbation is halved until the gain is stabilizing.
    """
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(optimal.shape)
    perturbation = direction * (scale * np.linalg.norm(optimal, 2) / np.linalg.norm(direction, 2))
    for _ in range(NEAR_GAIN_ATTEMPTS):
        gain: Matrix = optimal + perturbation
        if system.is_stabilizing(gain, hurwitz_tol):
            return gain
        perturbation = perturbation / 2.0
    return optimal


def far_gain(config: ExperimentConfig, system: LtiSystem, optimal: Matrix) -> tuple[Matrix, str]:
    """Return the "far" initial gain and its source.

    A gain produced by find_stabilizing_gain is used when it is farther from
    K* than ||K*||_F; otherwise K* is scaled by (1 + far_scale), which keeps
    the closed loop stable since LQR gains have an infinite upward gain margin.
    """
    configured = config.gain("far_gain")
    if configured is not None:
        if not system.is_stabilizing(configured, config["hurwitz_tol"]):
            raise ConfigError("'far_gain' is not stabilizing: A - B far_gain is not Hurwitz")
        return configured, "config"
    reference = float(np.linalg.norm(optimal, "fro"))
    candidate = find_stabilizing_gain(system, config["hurwitz_tol"])
    if float(np.linalg.norm(candidate - optimal, "fro")) > reference:
        return candidate, "find_stabilizing_gain"
    scaled: Matrix = (1.0 + config["far_scale"]) * optimal
    if not system.is_stabilizing(scaled, config["hurwitz_tol"]):
        raise NumericalError("scaled optimal gain is not stabilizing")
    return scaled, "scaled_optimal"


def _fig1_cell(
    config: ExperimentConfig,
    system: LtiSystem,
    cost: LqrCost,
    gain: Matrix,
    xi: float,
    p_star: Matrix,
) -> list[DataDrivenIterate]:
    seeds = derive_seeds(config["seed"])
    excitation = make_signal(config["input"], system.m, seeds["input"])
    noise = make_signal(config["noise"], system.n, seeds["noise"], amplitude=xi)
    data = datadriven.simulate_collect(
        system,
        excitation,
        noise,
        config["x0"],
        config["samples"],
        config["dt"],
        config["substeps"],
    )
    return datadriven.pi_data_iterate(
        data, cost, gain, config["n_iter"], p_star, system, hurwitz_tol=config["hurwitz_tol"]
    )


def cmd_fig1(config: ExperimentConfig, system: LtiSystem, cost: LqrCost) -> RunSummary:
    """Run the four (initial gain, noise level) cells in parallel and compare them.

    The same input and noise frequencies are used in every cell, so the cells
    only differ in the initial gain and the noise amplitude xi.
    """
    solution = solve_are(system, cost, hurwitz_tol=config["hurwitz_tol"])
    seeds = derive_seeds(config["seed"])
    near = near_gain(
        system, solution.k_star, config["near_scale"], seeds["gain"], config["hurwitz_tol"]
    )
    far, far_source = far_gain(config, system, solution.k_star)
    gains = {"near": near, "far": far}
    cells = [(label, xi) for label in gains for xi in config["xi"]]

    with concurrent.futures.ThreadPoolExecutor(max_workers=config["jobs"]) as executor:
        futures = {
            cell: executor.submit(
                _fig1_cell, config, system, cost, gains[cell[0]], cell[1], solution.p_star
            )
            for cell in cells
        }
        results = {cell: future.result() for cell, future in futures.items()}

    config_hash = config.config_hash()
    outputs = []
    cell_details: dict[str, Any] = {}
    for (label, xi), iterates in results.items():
        filename = f"{config['output']}fig1-{label}-xi{xi:g}.csv"
        write_csv(
            filename,
            config_hash,
            datadriven.CSV_COLUMNS,
            (iterate.csv_row() for iterate in iterates),
        )
        outputs.append(filename)
        cell_details[f"{label}-xi{xi:g}"] = {
            "final_err_to_opt": iterates[-1].err_to_opt,
            "stabilizing_all": all(iterate.stabilizing for iterate in iterates),
            "rank_ok": iterates[0].rank_ok,
        }

    stabilizing_all = all(cell["stabilizing_all"] for cell in cell_details.values())
    ordering = {}
    for label in gains:
        final = [cell_details[f"{label}-xi{xi:g}"]["final_err_to_opt"] for xi in config["xi"]]
        ordering[label] = all(lower < upper for lower, upper in zip(final, final[1:]))
    if not stabilizing_all:
        LOGGER.error("fig1: a cell generated a non-stabilizing gain.")
    if not all(ordering.values()):
        LOGGER.error("fig1: final errors do not grow with the noise level: %s", ordering)
    ok = stabilizing_all and all(ordering.values())
    return RunSummary(
        mode="fig1",
        iterations=config["n_iter"],
        final_err_to_opt=max(cell["final_err_to_opt"] for cell in cell_details.values()),
        stabilizing_all=stabilizing_all,
        rank_ok=all(cell["rank_ok"] for cell in cell_details.values()),
        exit_code=EXIT_OK if ok else EXIT_REGIME_VIOLATION,
        outputs=outputs,
        details={
            "cells": cell_details,
            "ordering": ordering,
            "near_gain": near.tolist(),
            "far_gain": far.tolist(),
            "far_gain_source": far_source,
            "seeds": seeds,
        },
    )


COMMAND_FUNCTIONS: dict[str, Callable[[ExperimentConfig, LtiSystem, LqrCost], RunSummary]] = {
    "are": cmd_solve_are,
    "pi-exact": cmd_pi,
    "pi-robust": cmd_pi_robust,
    "pi-data": cmd_pi_data,
    "fig1": cmd_fig1,
}


def parse_args(args: list[str]) -> argparse.Namespace:
    """Parse the command line arguments."""
    parser = argparse.ArgumentParser(
        prog=__script_name__,
        description="Solve continuous-time LQR problems with exact, robust "
        "and data-driven policy iteration.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "-c",
        "--config",
        action="append",
        default=[],
        help="Configuration file (JSON or YAML). Can be specified multiple times; "
        "later files are merged on top of earlier ones.",
    )
    common.add_argument("-o", "--out", help="Output path prefix (default: ./)")
    common.add_argument("--seed", type=int, help="Master seed for all random sources")
    common.add_argument(
        "-f", "--force", action="store_true", help="Overwrite existing output files"
    )
    common.add_argument(
        "--debug",
        dest="log_level",
        help="Print debug output",
        action="store_const",
        const=logging.DEBUG,
        default=logging.WARNING,
    )
    common.add_argument(
        "-v",
        "--verbose",
        dest="log_level",
        help="Print informational messages",
        action="store_const",
        const=logging.INFO,
        default=logging.WARNING,
    )
    common.add_argument(
        "-q",
        "--quiet",
        dest="log_level",
        help="Decrease output verbosity to errors only",
        action="store_const",
        const=logging.ERROR,
        default=logging.WARNING,
    )

    subparsers = parser.add_subparsers(dest="command", metavar="MODE", required=True)
    for command, command_help in COMMANDS.items():
        subparser = subparsers.add_parser(
            command, parents=[common], help=command_help, description=command_help
        )
        if command == "fig1":
            subparser.add_argument(
                "-j", "--jobs", type=int, help="Number of cells to run in parallel (default: 4)"
            )
    return parser.parse_args(args)


def _record_error(config: ExperimentConfig, error: BaseException, exit_code: int) -> None:
    prefix = config.get("output")
    if not isinstance(prefix, str):
        return
    directory = os.path.dirname(prefix)
    if directory and not os.path.isdir(directory):
        return
    record = {
        "mode": config.get("mode"),
        "error": type(error).__name__,
        "message": str(error),
        "exit_code": exit_code,
    }
    try:
        append_summary(f"{prefix}summary.jsonl", json.dumps(record, sort_keys=True))
    except OSError as os_error:
        LOGGER.warning("Failed to write error record: %s", os_error)


def main(argv: Optional[list[str]] = None) -> int:
    """Main function with a return code; see exit codes EXIT_*."""
    start_time = time.time()
    args = parse_args(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(format=LOG_FORMAT, level=args.log_level)

    config = ExperimentConfig()
    try:
        config.add_command_line_arguments(args)
        config.set_defaults()
        config.check()
        system = config.system()
        cost = config.cost()
        cost.check_observable(system)
    except (YAMLError, DuplicateKeyError) as error:
        LOGGER.error("Failed to parse configuration: %s", error)
        _record_error(config, error, EXIT_CONFIG_ERROR)
        return EXIT_CONFIG_ERROR
    except (OSError, ValueError) as error:
        LOGGER.error("Invalid configuration: %s", error)
        _record_error(config, error, EXIT_CONFIG_ERROR)
        return EXIT_CONFIG_ERROR

    outputs = output_files(config)
    try:
        if not prepare_output(outputs, args.force):
            return EXIT_CONFIG_ERROR
        config.save(outputs[-1])
    except OSError as error:
        LOGGER.error("Failed to prepare output: %s", error)
        return EXIT_CONFIG_ERROR

    try:
        summary = COMMAND_FUNCTIONS[config.mode](config, system, cost)
    except ConfigError as error:
        LOGGER.error("Invalid configuration: %s", error)
        _record_error(config, error, EXIT_CONFIG_ERROR)
        return EXIT_CONFIG_ERROR
    except (LqrError, np.linalg.LinAlgError) as error:
        LOGGER.error("%s failed: %s", config.mode, error)
        _record_error(config, error, EXIT_NUMERICAL_FAILURE)
        return EXIT_NUMERICAL_FAILURE

    summary.config_hash = config.config_hash()
    summary.outputs.append(outputs[-1])
    summary.wall_time = time.time() - start_time
    append_summary(f"{config['output']}summary.jsonl", summary.to_json())
    LOGGER.info("Execution time: %s", duration_str(summary.wall_time))
    return summary.exit_code
