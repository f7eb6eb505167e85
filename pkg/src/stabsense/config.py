"""Run configuration for the command-line tool.

A run is described by one JSON object, optionally overridden by
``--set dotted.key=value`` flags. Each physical entry belongs to exactly one
unit system: dimensionless keys are in units of T2 (angular rates times T2),
SI keys carry their unit in the name. Mixing the two is an error.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .bloch import DecoherenceParams
from .errors import ConfigError, DomainError
from .protocols import MODES
from .stabilization import InitialState

UNIT_SYSTEMS = ("dimensionless", "si")

DIMENSIONLESS_KEYS = {
    "params.t1_over_t2", "detuning", "t_end", "h_max", "shots.deltas", "waveform.t_end",
}
SI_KEYS = {
    "params.t1", "params.t2", "detuning_hz", "t_end_s", "h_max_rad_s", "shots.deltas_hz",
    "waveform.t_end_s",
}

COMMON_DEFAULTS: dict = {
    "units": "dimensionless",
    "params": {"eta": 1.0},
    "initial_state": "optimal",
    "protocol": "stabilized",
    "n_points": 501,
    "mode": "per_shot",
    "seed": 0,
    "sweep": {
        "t1_over_t2": [0.5, 0.6, 0.764, 1.0, 1.5, 2.0, 5.0, 10.0, 100.0],
        "v_x0": {"start": 0.02, "stop": 0.98, "num": 49},
    },
    "miscal": {"extent": 0.3, "n": 41},
    "shots": {"N": 1000000, "n_iterations": 20, "n_chunks": 10, "contrast": 1.0, "t2_drift": 0.0},
    "waveform": {"n_samples": 1001},
    "output": None,
}
DIMENSIONLESS_DEFAULTS: dict = {
    "params": {"t1_over_t2": 1.0},
    "detuning": 0.01,
    "t_end": 5.0,
    "h_max": 50.0,
    "shots": {"deltas": [-0.02, -0.01, 0.0, 0.01, 0.02]},
    "waveform": {"t_end": 5.0},
}


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict) and k not in ("v_x0",):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def set_path(d: dict, dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = d
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(dotted, "cannot set a sub-key of a non-object entry")
    node[keys[-1]] = value


def parse_override(text: str) -> tuple[str, Any]:
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigError(text, "override must look like key.path=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


@dataclass
class RunConfig:
    """Validated, unit-resolved view of a run's JSON configuration."""

    raw: dict

    @classmethod
    def load(cls, path: str | Path | None = None, overrides: list[str] | None = None) -> "RunConfig":
        user: dict = {}
        if path is not None:
            try:
                user = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError("config", f"cannot read {path}: {exc}") from exc
            if not isinstance(user, dict):
                raise ConfigError("config", "top level must be a JSON object")
        for text in overrides or []:
            key, value = parse_override(text)
            set_path(user, key, value)
        return cls.from_dict(user)

    @classmethod
    def from_dict(cls, user: dict) -> "RunConfig":
        units = user.get("units", "dimensionless")
        if units not in UNIT_SYSTEMS:
            raise ConfigError("units", f"must be one of {UNIT_SYSTEMS}, got {units!r}")
        flat = _flatten(user)
        forbidden = SI_KEYS if units == "dimensionless" else DIMENSIONLESS_KEYS
        for key in sorted(flat):
            if key in forbidden:
                raise ConfigError(key, f"not allowed with units={units!r}")
        defaults = COMMON_DEFAULTS if units == "si" else _merge(COMMON_DEFAULTS, DIMENSIONLESS_DEFAULTS)
        cfg = cls(_merge(defaults, user))
        cfg._validate()
        return cfg

    def get(self, dotted: str):
        node = self.raw
        for k in dotted.split("."):
            if not isinstance(node, dict) or k not in node:
                raise ConfigError(dotted, "missing")
            node = node[k]
        return node

    @property
    def units(self) -> str:
        return self.raw["units"]

    @property
    def si(self) -> bool:
        return self.units == "si"

    @property
    def time_scale(self) -> float:
        """Seconds per dimensionless time unit (T2 in SI mode, 1 otherwise)."""
        return float(self._positive("params.t2")) if self.si else 1.0

    def _positive(self, key: str) -> float:
        value = self.get(key)
        if not isinstance(value, (int, float)) or isinstance(value, bool) or not value > 0:
            raise ConfigError(key, f"must be a positive number, got {value!r}")
        return float(value)

    def _number(self, key: str) -> float:
        value = self.get(key)
        if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
            raise ConfigError(key, f"must be a finite number, got {value!r}")
        return float(value)

    def params(self) -> DecoherenceParams:
        eta = self._number("params.eta")
        try:
            if self.si:
                t1 = self._positive("params.t1")
                t2 = self._positive("params.t2")
                return DecoherenceParams.from_ratio(t1 / t2, eta=eta)
            return DecoherenceParams.from_ratio(self._positive("params.t1_over_t2"), eta=eta)
        except DomainError as exc:
            raise ConfigError("params", str(exc)) from exc

    def mode(self) -> str:
        mode = self.get("mode")
        if mode not in MODES:
            raise ConfigError("mode", f"must be one of {MODES}, got {mode!r}")
        return mode

    def _has(self, key: str) -> bool:
        try:
            self.get(key)
        except ConfigError:
            return False
        return True

    # SI entries without a value fall back to the dimensionless defaults

    def detuning(self) -> float:
        """Angular detuning times T2 (``detuning_hz`` is an ordinary frequency)."""
        if self.si:
            if not self._has("detuning_hz"):
                return DIMENSIONLESS_DEFAULTS["detuning"]
            return 2.0 * math.pi * self._number("detuning_hz") * self.time_scale
        return self._number("detuning")

    def t_end(self, key: str = "t_end") -> float:
        if self.si:
            if not self._has(f"{key}_s"):
                return 5.0
            return self._positive(f"{key}_s") / self.time_scale
        return self._positive(key)

    def h_max(self) -> float:
        if self.si:
            if not self._has("h_max_rad_s"):
                return DIMENSIONLESS_DEFAULTS["h_max"]
            return self._positive("h_max_rad_s") * self.time_scale
        return self._positive("h_max")

    def initial_state(self) -> InitialState | None:
        """``None`` means "use the optimal state for the configured mode"."""
        spec = self.get("initial_state")
        if spec == "optimal":
            return None
        if not isinstance(spec, dict) or len(spec) != 1:
            raise ConfigError("initial_state", "must be \"optimal\", {\"v_x0\": x} or {\"theta_over_pi\": x}")
        try:
            if "v_x0" in spec:
                return InitialState.from_vx(float(spec["v_x0"]))
            if "theta_over_pi" in spec:
                return InitialState(math.pi * float(spec["theta_over_pi"]))
        except (TypeError, ValueError) as exc:
            raise ConfigError("initial_state", str(exc)) from exc
        raise ConfigError("initial_state", f"unknown key {next(iter(spec))!r}")

    def grid(self, key: str) -> np.ndarray:
        """A list of numbers or ``{"start", "stop", "num"}``."""
        spec = self.get(key)
        try:
            if isinstance(spec, dict):
                if set(spec) != {"start", "stop", "num"}:
                    raise ValueError("expected keys start, stop, num")
                num = spec["num"]
                if not isinstance(num, int) or num < 1:
                    raise ValueError("num must be a positive integer")
                values = np.linspace(float(spec["start"]), float(spec["stop"]), num)
            elif isinstance(spec, list) and spec:
                values = np.array([float(v) for v in spec])
            else:
                raise ValueError("must be a non-empty list or a start/stop/num object")
        except (TypeError, ValueError) as exc:
            raise ConfigError(key, f"malformed grid: {exc}") from exc
        if not np.all(np.isfinite(values)):
            raise ConfigError(key, "malformed grid: non-finite entries")
        return values

    def shot_deltas(self) -> np.ndarray:
        if self.si:
            if not self._has("shots.deltas_hz"):
                return np.array(DIMENSIONLESS_DEFAULTS["shots"]["deltas"])
            return 2.0 * math.pi * self.grid("shots.deltas_hz") * self.time_scale
        return self.grid("shots.deltas")

    def _validate(self) -> None:
        self.params()
        self.mode()
        if self.get("protocol") not in ("stabilized", "ramsey"):
            raise ConfigError("protocol", "must be 'stabilized' or 'ramsey'")
        seed = self.get("seed")
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ConfigError("seed", f"must be a non-negative integer, got {seed!r}")
        n = self.get("n_points")
        if not isinstance(n, int) or n < 2:
            raise ConfigError("n_points", f"must be an integer >= 2, got {n!r}")
        self.initial_state()
        self.h_max()
        for key in ("sweep.t1_over_t2", "sweep.v_x0", "shots.deltas", "shots.deltas_hz"):
            if self._has(key):
                self.grid(key)
