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

"""Experiment configuration: loading, layering, strict checking and saving."""

import argparse
import copy
import hashlib
import json
import logging
import numbers
import typing
from typing import Any, Optional

import numpy as np
import ruamel.yaml

from lqr_rpi.errors import ConfigError
from lqr_rpi.matops import Matrix
from lqr_rpi.riccati import LqrCost, LtiSystem

LOGGER = logging.getLogger(__name__)

MODES = ("are", "pi-exact", "pi-robust", "pi-data", "fig1")
AUTO = "auto"

STIRRED_TANK = {"A": [[-21.0, -20.0], [9.0, 8.0]], "B": [[1.0, 0.0], [0.0, 1.0]]}
IDENTITY_COST = {"Q": [[1.0, 0.0], [0.0, 1.0]], "R": [[1.0, 0.0], [0.0, 1.0]]}

COMMON_DEFAULTS: dict[str, Any] = {"output": "./", "seed": 0, "hurwitz_tol": 1e-9}
MODE_DEFAULTS: dict[str, dict[str, Any]] = {
    "are": {"tolerance": 1e-12, "max_iter": 50, "K1": AUTO, "residual_tol": 1e-10},
    "pi-exact": {"tolerance": 1e-10, "max_iter": 50, "K1": AUTO},
    "pi-robust": {
        "K1": AUTO,
        "n_iter": 30,
        "disturbance": {
            "mode": "none",
            "norm_bound": 0.0,
            "decay": "geometric",
            "decay_rate": 0.5,
        },
    },
    "pi-data": {
        "K1": AUTO,
        "n_iter": 30,
        "input": {"amplitude": 0.2, "count": 100, "low": -500.0, "high": 500.0},
        "noise": None,
        "samples": 140,
        "dt": 0.1,
        "substeps": 20,
        "x0": None,
        "rank_tol": None,
        "save_data": False,
    },
    "fig1": {
        "system": STIRRED_TANK,
        "cost": IDENTITY_COST,
        "n_iter": 10,
        "input": {"amplitude": 0.2, "count": 100, "low": -500.0, "high": 500.0},
        "noise": {"count": 50, "low": -100.0, "high": 100.0},
        "samples": 140,
        "dt": 0.1,
        "substeps": 20,
        "x0": None,
        "xi": [0.01, 0.5],
        "near_scale": 0.05,
        "far_gain": AUTO,
        "far_scale": 2.0,
        "jobs": 4,
    },
}

SIGNAL_KEYS = {"amplitude", "count", "low", "high"}
BLOCK_KEYS = {
    "system": {"A", "B"},
    "cost": {"Q", "R"},
    "disturbance": {"mode", "norm_bound", "decay", "decay_rate"},
}


def dict_merge(base: dict[Any, Any], update: dict[Any, Any]) -> None:
    """Recursively merge update into base.

    Nested dictionaries are merged key by key. Any other value (matrices
    included) replaces the value in base.
    """
    for key, value in update.items():
        if isinstance(base.get(key), dict) and isinstance(value, dict):
            dict_merge(base[key], value)
        else:
            base[key] = copy.deepcopy(value)


def _is_number(value: Any) -> bool:
    return isinstance(value, numbers.Real) and not isinstance(value, bool)


class ExperimentConfig(dict[str, Any]):
    """Configuration of one lqr-rpi run.

    Values stay plain JSON types (dicts, lists, numbers, strings) so that the
    configuration can be hashed and saved as it was given. Typed objects are
    built on request by system(), cost() and gain().
    """

    def load(self, config_filename: str) -> None:
        """Load a JSON or YAML configuration file and merge it into the config."""
        yaml = ruamel.yaml.YAML(typ="safe")
        with open(config_filename, encoding="utf-8") as config_file:
            config = yaml.load(config_file)
        if config is None:
            return
        if not isinstance(config, dict):
            raise ConfigError(
                f"{config_filename}: top level must be an object, got {type(config).__name__}"
            )
        dict_merge(self, config)

    def add_command_line_arguments(self, args: argparse.Namespace) -> None:
        """Merge the command line arguments into the config."""
        for config_filename in args.config or []:
            self.load(config_filename)
        mode = self.get("mode")
        if mode is not None and mode != args.command:
            raise ConfigError(f"config is for mode '{mode}', but '{args.command}' was requested")
        self["mode"] = args.command
        if args.seed is not None:
            self["seed"] = args.seed
        if args.out is not None:
            self["output"] = args.out
        if getattr(args, "jobs", None) is not None:
            self["jobs"] = args.jobs

    @property
    def mode(self) -> str:
        """Selected subcommand."""
        return str(self["mode"])

    def set_defaults(self) -> None:
        """Fill in the defaults for all keys that the configured mode knows."""
        if self.get("mode") not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}, got {self.get('mode')!r}")
        for key, value in {**COMMON_DEFAULTS, **MODE_DEFAULTS[self.mode]}.items():
            if key not in self:
                self[key] = copy.deepcopy(value)
            elif isinstance(value, dict) and isinstance(self[key], dict):
                for subkey, subvalue in value.items():
                    self[key].setdefault(subkey, copy.deepcopy(subvalue))
        # x0 follows the order of A; a malformed A is left to check().
        drift = self["system"].get("A") if isinstance(self.get("system"), dict) else None
        if "x0" in self and self["x0"] is None and isinstance(drift, list):
            self["x0"] = [1.0] * len(drift)

    def _allowed_keys(self) -> set[str]:
        return {"mode", "system", "cost"} | set(COMMON_DEFAULTS) | set(MODE_DEFAULTS[self.mode])

    def check(self) -> None:
        """Check the format of the configuration.

        Unknown keys, wrong types, out-of-range values and matrices that do not
        conform to the plant dimensions raise ConfigError.
        """
        if self.get("mode") not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}, got {self.get('mode')!r}")
        unknown = sorted(set(self) - self._allowed_keys())
        if unknown:
            raise ConfigError(f"unknown keys for mode '{self.mode}': {', '.join(unknown)}")
        for key in ("system", "cost"):
            if key not in self:
                raise ConfigError(f"missing required block '{key}'")
        self._check_block("system")
        self._check_block("cost")
        n, m = self._check_dimensions()

        self._check_number("hurwitz_tol", positive=True)
        self._check_integer("seed", minimum=0)
        if not isinstance(self.get("output"), str):
            raise ConfigError("'output' must be a string prefix")
        for key in ("tolerance", "residual_tol", "dt", "near_scale", "far_scale"):
            if key in self:
                self._check_number(key, positive=True)
        for key in ("max_iter", "n_iter", "samples", "substeps", "jobs"):
            if key in self:
                self._check_integer(key, minimum=1)
        for key in ("K1", "far_gain"):
            if key in self and self[key] != AUTO:
                self._check_matrix(self[key], key, m, n)
        if "disturbance" in self:
            self._check_disturbance()
        if "input" in self:
            self._check_signal(self["input"], "input", SIGNAL_KEYS)
        if self.get("noise") is not None:
            noise_keys = {"count", "low", "high"} if self.mode == "fig1" else SIGNAL_KEYS
            self._check_signal(self["noise"], "noise", noise_keys)
        if "x0" in self:
            self._check_vector("x0", n)
        if self.get("rank_tol") is not None:
            self._check_number("rank_tol", positive=True)
        if "save_data" in self and not isinstance(self["save_data"], bool):
            raise ConfigError("'save_data' must be true or false")
        if "xi" in self:
            self._check_xi()

    def _check_block(self, key: str) -> None:
        block = self[key]
        if not isinstance(block, dict):
            raise ConfigError(f"'{key}' must be an object, got {type(block).__name__}")
        expected = BLOCK_KEYS[key]
        unknown = sorted(set(block) - expected)
        if unknown:
            raise ConfigError(f"unknown keys in '{key}': {', '.join(unknown)}")
        missing = sorted(expected - set(block))
        if missing and key in ("system", "cost"):
            raise ConfigError(f"missing keys in '{key}': {', '.join(missing)}")

    @staticmethod
    def _matrix_shape(value: Any, name: str) -> tuple[int, int]:
        if not isinstance(value, list) or not value or not all(isinstance(r, list) for r in value):
            raise ConfigError(f"'{name}' must be a non-empty list of rows")
        cols = len(value[0])
        for row in value:
            if len(row) != cols or cols == 0:
                raise ConfigError(f"'{name}' must have rows of equal, non-zero length")
            if not all(_is_number(entry) for entry in row):
                raise ConfigError(f"'{name}' must contain numbers only")
        return len(value), cols

    def _check_matrix(self, value: Any, name: str, rows: int, cols: int) -> None:
        shape = self._matrix_shape(value, name)
        if shape != (rows, cols):
            raise ConfigError(f"'{name}' must have shape {rows}x{cols}, got {shape[0]}x{shape[1]}")

    def _check_dimensions(self) -> tuple[int, int]:
        n, cols = self._matrix_shape(self["system"]["A"], "system.A")
        if n != cols:
            raise ConfigError(f"'system.A' must be square, got {n}x{cols}")
        rows, m = self._matrix_shape(self["system"]["B"], "system.B")
        if rows != n:
            raise ConfigError(f"'system.B' must have {n} rows, got {rows}")
        self._check_matrix(self["cost"]["Q"], "cost.Q", n, n)
        self._check_matrix(self["cost"]["R"], "cost.R", m, m)
        return n, m

    def _check_number(self, key: str, positive: bool = False, block: Optional[str] = None) -> None:
        container = self if block is None else self[block]
        name = key if block is None else f"{block}.{key}"
        value = container.get(key)
        if not _is_number(value) or not np.isfinite(value):
            raise ConfigError(f"'{name}' must be a finite number, got {value!r}")
        if positive and value <= 0:
            raise ConfigError(f"'{name}' must be positive, got {value!r}")

    def _check_integer(self, key: str, minimum: int) -> None:
        value = self.get(key)
        if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
            raise ConfigError(f"'{key}' must be an integer >= {minimum}, got {value!r}")

    def _check_vector(self, key: str, length: int) -> None:
        value = self[key]
        if (
            not isinstance(value, list)
            or len(value) != length
            or not all(_is_number(entry) for entry in value)
        ):
            raise ConfigError(f"'{key}' must be a list of {length} numbers")

    def _check_disturbance(self) -> None:
        self._check_block("disturbance")
        block = self["disturbance"]
        if block.get("mode") not in ("none", "fixed_norm", "decaying"):
            raise ConfigError(f"'disturbance.mode' is invalid: {block.get('mode')!r}")
        if block.get("decay") not in ("geometric", "inverse_square"):
            raise ConfigError(f"'disturbance.decay' is invalid: {block.get('decay')!r}")
        self._check_number("norm_bound", block="disturbance")
        self._check_number("decay_rate", positive=True, block="disturbance")
        if block["norm_bound"] < 0:
            raise ConfigError("'disturbance.norm_bound' must not be negative")

    def _check_signal(self, block: Any, name: str, expected: set[str]) -> None:
        if not isinstance(block, dict):
            raise ConfigError(f"'{name}' must be an object, got {type(block).__name__}")
        if set(block) != expected:
            raise ConfigError(f"'{name}' must have exactly the keys {', '.join(sorted(expected))}")
        count = block["count"]
        if not isinstance(count, int) or isinstance(count, bool) or count < 1:
            raise ConfigError(f"'{name}.count' must be a positive integer, got {count!r}")
        for key in expected - {"count"}:
            if not _is_number(block[key]):
                raise ConfigError(f"'{name}.{key}' must be a number, got {block[key]!r}")
        if block["low"] > block["high"]:
            raise ConfigError(f"'{name}.low' must not exceed '{name}.high'")

    def _check_xi(self) -> None:
        values = self["xi"]
        if (
            not isinstance(values, list)
            or len(values) < 2
            or not all(_is_number(value) and value > 0 for value in values)
        ):
            raise ConfigError("'xi' must be a list of at least two positive numbers")
        if sorted(values) != values or len(set(values)) != len(values):
            raise ConfigError("'xi' must be strictly increasing")

    def system(self) -> LtiSystem:
        """Return the configured plant (raises ControllabilityError)."""
        return LtiSystem(
            np.array(self["system"]["A"], dtype=np.float64),
            np.array(self["system"]["B"], dtype=np.float64),
        )

    def cost(self) -> LqrCost:
        """Return the configured cost weights (raises DefinitenessError)."""
        return LqrCost(
            np.array(self["cost"]["Q"], dtype=np.float64),
            np.array(self["cost"]["R"], dtype=np.float64),
        )

    def gain(self, key: str = "K1") -> Optional[Matrix]:
        """Return the configured gain, or None if it is set to "auto"."""
        value = self.get(key, AUTO)
        if value == AUTO:
            return None
        return np.array(value, dtype=np.float64)

    def config_hash(self) -> str:
        """Return the SHA-256 of the canonical JSON dump of the config."""
        canonical = json.dumps(self, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def save(self, config_filename: str) -> None:
        """Save the effective configuration as YAML."""
        yaml = ruamel.yaml.YAML()
        yaml.default_flow_style = None
        with open(config_filename, "w", encoding="utf-8") as config_file:
            yaml.dump(typing.cast(dict[str, Any], json.loads(json.dumps(self))), config_file)
