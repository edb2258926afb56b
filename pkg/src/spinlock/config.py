"""Experiment configuration: JSON files with unit-tagged quantities.

Every dimensional number is written as ``{"value": x, "unit": "<unit>"}``.
Supported units:

=============  =====================================================
kind           units
=============  =====================================================
frequency      ``rad/s``, ``2pi_Hz``, ``2pi_kHz``, ``2pi_MHz``, ``gamma_g``
time           ``s``, ``ms``, ``us``, ``ns``
angle          ``rad``, ``pi``
=============  =====================================================

``gamma_g`` expresses a frequency in multiples of the configured gain rate.
Unknown keys are errors.  :func:`parse_config` returns an
:class:`ExperimentConfig` with every default resolved; ``echo`` holds the
resolved values in SI units for the run metadata.

Defaults
--------
rates
    required; ``gamma_z`` defaults to 0.
drive
    ``epsilon`` 2pi x 2.37 kHz, ``delta`` 0, ``varphi`` pi/2.
grid
    ``n_theta`` 64, ``n_phi`` 128.
measurement
    ``shots`` 1000, ``spam_error`` 7e-3, ``rng_seed`` 0.
schedule
    ``stage1`` 200 us, ``stage2`` 200 us, ``dt`` automatic, ``samples`` 401.
sweep
    per kind, see ``DEFAULT_SWEEPS``.
params
    per kind, see ``PARAM_SCHEMA``.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .estimation import MeasurementConfig
from .sync import KHZ, MHZ, OPERATING_EPSILON, DriveParams, RateSet

KINDS = (
    "relax",
    "sync",
    "qgrid",
    "sprofile",
    "tongue",
    "bandwidth",
    "deform",
    "forced",
    "eightlevel",
    "labframe",
    "ratefit",
    "tomography",
)

FREQ_UNITS = {"rad/s": 1.0, "2pi_Hz": 2 * math.pi, "2pi_kHz": KHZ, "2pi_MHz": MHZ}
TIME_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9}
ANGLE_UNITS = {"rad": 1.0, "pi": math.pi}

# Quantity kinds: "freq", "time", "angle" are unit tagged; "int", "float",
# "bool", "str" are plain JSON values; "freqs" is a list of frequencies.
SECTION_SCHEMA = {
    "rates": {"gamma_g": "freq", "gamma_d": "freq", "gamma_z": "freq"},
    "drive": {"epsilon": "freq", "delta": "freq", "varphi": "angle"},
    "grid": {"n_theta": "int", "n_phi": "int"},
    "measurement": {"shots": "int_or_null", "spam_error": "float", "rng_seed": "int"},
    "schedule": {"stage1": "time", "stage2": "time", "dt": "time", "samples": "int"},
}

PARAM_SCHEMA = {
    "relax": {"initial": "str"},
    "sync": {"initial": "str"},
    "qgrid": {"time": "time", "initial": "str"},
    "sprofile": {"time": "time", "initial": "str"},
    "tongue": {"numeric_check": "bool"},
    "bandwidth": {},
    "deform": {},
    "forced": {"epsilons": "freqs", "duration": "time"},
    "eightlevel": {
        "gamma": "freq",
        "delta_p": "freq",
        "raman_detuning": "freq",
        "rabi_r0": "freq",
        "rabi_r1": "freq",
        "horizon": "time",
        "scaling": "bool",
    },
    "labframe": {
        "omega_q": "freq",
        "drive_offsets": "freqs",
        "phases": "angles",
        "sample_dt": "time",
        "duration": "time",
        "drive_start": "time",
        "window_start": "time",
        "window_end": "time",
        "phase_window_start": "time",
        "initial": "str",
    },
    "ratefit": {"n_points": "int"},
    "tomography": {"method": "str", "replicas": "int", "delta": "freq"},
}

PARAM_DEFAULTS = {
    "relax": {"initial": "1"},
    "sync": {"initial": "1"},
    "qgrid": {"time": None, "initial": "1"},
    "sprofile": {"time": None, "initial": "1"},
    "tongue": {"numeric_check": False},
    "bandwidth": {},
    "deform": {},
    "forced": {"epsilons": None, "duration": None},
    "eightlevel": {
        "gamma": 2 * math.pi * 19.6e6,
        "delta_p": 2 * math.pi * 4.4e6,
        "raman_detuning": 2 * math.pi * 1.0e6,
        "rabi_r0": None,
        "rabi_r1": None,
        "horizon": 400e-6,
        "scaling": False,
    },
    "labframe": {
        "omega_q": 10 * MHZ,
        "drive_offsets": None,
        "phases": None,
        "sample_dt": 2e-9,
        "duration": 2000e-6,
        "drive_start": 0.0,
        "window_start": 300e-6,
        "window_end": 2000e-6,
        "phase_window_start": 1250e-6,
        "initial": "limit_cycle",
    },
    "ratefit": {"n_points": 30},
    "tomography": {"method": "resonant", "replicas": 100, "delta": 0.0},
}

# Sweep axes accepted per kind, with default (min, max, n) in units of gamma_g.
DEFAULT_SWEEPS = {
    "tongue": {"delta": (-25.0, 25.0, 101), "epsilon": (0.1, 6.0, 60)},
    "bandwidth": {"delta": (-25.0, 25.0, 201)},
    "deform": {"epsilon": (0.0, 50.0, 501)},
}

TOP_LEVEL = {"kind", "rates", "drive", "sweep", "grid", "measurement", "schedule", "params", "output", "seed"}
SWEEP_KEYS = {"min", "max", "n", "unit"}
STATES = ("0", "1", "+", "limit_cycle", "mixed")


@dataclass
class ExperimentConfig:
    kind: str
    rates: RateSet
    drive: DriveParams
    sweeps: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    measurement: MeasurementConfig = field(default_factory=MeasurementConfig)
    schedule: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    output: str | None = None
    echo: dict = field(default_factory=dict)


def _quantity(raw, kind: str, path: str, gamma_g: float | None):
    if kind in ("int", "int_or_null"):
        if raw is None and kind == "int_or_null":
            return None
        if isinstance(raw, bool) or not isinstance(raw, int):
            raise ConfigError(f"{path}: expected an integer, got {raw!r}")
        return raw
    if kind == "float":
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {raw!r}")
        return float(raw)
    if kind == "bool":
        if not isinstance(raw, bool):
            raise ConfigError(f"{path}: expected true/false, got {raw!r}")
        return raw
    if kind == "str":
        if not isinstance(raw, str):
            raise ConfigError(f"{path}: expected a string, got {raw!r}")
        return raw
    if kind in ("freqs", "angles"):
        if not isinstance(raw, list) or not raw:
            raise ConfigError(f"{path}: expected a nonempty list")
        one = "freq" if kind == "freqs" else "angle"
        return [_quantity(x, one, f"{path}[{i}]", gamma_g) for i, x in enumerate(raw)]
    if not isinstance(raw, dict) or set(raw) != {"value", "unit"}:
        raise ConfigError(f'{path}: expected {{"value": <number>, "unit": <unit>}}, got {raw!r}')
    value, unit = raw["value"], raw["unit"]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{path}.value: expected a finite number, got {value!r}")
    table = {"freq": FREQ_UNITS, "time": TIME_UNITS, "angle": ANGLE_UNITS}[kind]
    if kind == "freq" and unit == "gamma_g":
        if gamma_g is None:
            raise ConfigError(f"{path}.unit: 'gamma_g' cannot be used inside the rates section")
        return float(value) * gamma_g
    if unit not in table:
        allowed = sorted(table) + (["gamma_g"] if kind == "freq" else [])
        raise ConfigError(f"{path}.unit: unknown {kind} unit {unit!r}; allowed: {', '.join(allowed)}")
    return float(value) * table[unit]


def _section(data: dict, name: str, schema: dict, gamma_g, path: str | None = None) -> dict:
    path = path or name
    raw = data.get(name, {})
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected an object")
    out = {}
    for key, value in raw.items():
        if key not in schema:
            raise ConfigError(f"{path}.{key}: unknown key (allowed: {', '.join(sorted(schema)) or 'none'})")
        out[key] = _quantity(value, schema[key], f"{path}.{key}", gamma_g)
    return out


def _sweeps(data: dict, kind: str, gamma_g: float) -> dict:
    allowed = DEFAULT_SWEEPS.get(kind, {})
    raw = data.get("sweep", {})
    if not isinstance(raw, dict):
        raise ConfigError("sweep: expected an object")
    out = {}
    for axis, (lo, hi, n) in allowed.items():
        out[axis] = np.linspace(lo * gamma_g, hi * gamma_g, n)
    for axis, spec in raw.items():
        path = f"sweep.{axis}"
        if axis not in allowed:
            raise ConfigError(f"{path}: unknown sweep axis for kind {kind!r} (allowed: {', '.join(allowed) or 'none'})")
        if not isinstance(spec, dict):
            raise ConfigError(f"{path}: expected an object with min, max, n, unit")
        extra = set(spec) - SWEEP_KEYS
        if extra:
            raise ConfigError(f"{path}.{sorted(extra)[0]}: unknown key (allowed: max, min, n, unit)")
        missing = SWEEP_KEYS - set(spec)
        if missing:
            raise ConfigError(f"{path}: missing {', '.join(sorted(missing))}")
        lo = _quantity({"value": spec["min"], "unit": spec["unit"]}, "freq", f"{path}.min", gamma_g)
        hi = _quantity({"value": spec["max"], "unit": spec["unit"]}, "freq", f"{path}.max", gamma_g)
        n = _quantity(spec["n"], "int", f"{path}.n", gamma_g)
        if n < 2:
            raise ConfigError(f"{path}.n: resolution must be >= 2, got {n}")
        if lo > hi:
            raise ConfigError(f"{path}: min must not exceed max")
        out[axis] = np.linspace(lo, hi, n)
    return out


def resolve_config(data: dict, source: str = "<config>") -> ExperimentConfig:
    """Validate a decoded JSON object and fill every default."""
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a JSON object")
    for key in data:
        if key not in TOP_LEVEL:
            raise ConfigError(f"{key}: unknown key (allowed: {', '.join(sorted(TOP_LEVEL))})")
    kind = data.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"kind: expected one of {', '.join(KINDS)}, got {kind!r}")
    if "rates" not in data:
        raise ConfigError("rates: required section is missing")
    rates_raw = _section(data, "rates", SECTION_SCHEMA["rates"], None)
    for name in ("gamma_g", "gamma_d"):
        if name not in rates_raw:
            raise ConfigError(f"rates.{name}: required field is missing")
    for name, value in rates_raw.items():
        if value < 0:
            raise ConfigError(f"rates.{name}: rate must be non-negative, got {value}")
    rates = RateSet(rates_raw["gamma_g"], rates_raw["gamma_d"], rates_raw.get("gamma_z", 0.0))
    gg = rates.gamma_g

    drive_raw = _section(data, "drive", SECTION_SCHEMA["drive"], gg)
    if drive_raw.get("epsilon", 0.0) < 0:
        raise ConfigError("drive.epsilon: drive strength must be non-negative")
    drive = DriveParams(
        drive_raw.get("epsilon", OPERATING_EPSILON), drive_raw.get("delta", 0.0), drive_raw.get("varphi", math.pi / 2)
    )

    grid = {"n_theta": 64, "n_phi": 128}
    grid.update(_section(data, "grid", SECTION_SCHEMA["grid"], gg))
    for k, v in grid.items():
        if v < 2:
            raise ConfigError(f"grid.{k}: resolution must be >= 2, got {v}")

    meas = {"shots": 1000, "spam_error": 7e-3, "rng_seed": 0}
    meas.update(_section(data, "measurement", SECTION_SCHEMA["measurement"], gg))
    if "seed" in data:
        meas["rng_seed"] = _quantity(data["seed"], "int", "seed", gg)
    try:
        measurement = MeasurementConfig(**meas)
    except ValueError as exc:
        raise ConfigError(f"measurement: {exc}") from None

    schedule = {"stage1": 200e-6, "stage2": 200e-6, "dt": None, "samples": 401}
    schedule.update(_section(data, "schedule", SECTION_SCHEMA["schedule"], gg))
    for k in ("stage1", "stage2"):
        if schedule[k] < 0:
            raise ConfigError(f"schedule.{k}: duration must be non-negative")
    if schedule["dt"] is not None and schedule["dt"] <= 0:
        raise ConfigError("schedule.dt: step must be positive")
    if schedule["samples"] < 2:
        raise ConfigError("schedule.samples: must be >= 2")

    params = dict(PARAM_DEFAULTS[kind])
    params.update(_section(data, "params", PARAM_SCHEMA[kind], gg))
    for key in ("initial",):
        if key in params and params[key] not in STATES:
            raise ConfigError(f"params.{key}: expected one of {', '.join(STATES)}, got {params[key]!r}")
    if kind == "tomography" and params["method"] not in ("resonant", "detuned"):
        raise ConfigError("params.method: expected 'resonant' or 'detuned'")

    output = data.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("output: expected a path string")

    sweeps = _sweeps(data, kind, gg)
    echo = {
        "kind": kind,
        "rates_rad_s": [rates.gamma_g, rates.gamma_d, rates.gamma_z],
        "drive": {"epsilon": drive.epsilon, "delta": drive.delta, "varphi": drive.varphi},
        "grid": grid,
        "measurement": meas,
        "schedule": schedule,
        "params": params,
        "sweeps": {k: [float(v[0]), float(v[-1]), int(v.size)] for k, v in sweeps.items()},
    }
    return ExperimentConfig(kind, rates, drive, sweeps, grid, measurement, schedule, params, output, echo)


def parse_config(path) -> ExperimentConfig:
    """Read and validate a JSON experiment file.

    Raises
    ------
    ConfigError
        With the line/column of a JSON syntax error or the dotted path of the
        offending field.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})") from None
    try:
        return resolve_config(data, str(path))
    except ConfigError as exc:
        line = _locate(text, str(exc))
        where = f"{path}:{line}" if line else str(path)
        raise ConfigError(f"{where}: {exc}") from None


def _locate(text: str, message: str) -> int | None:
    """Line of the first occurrence of the key named at the start of ``message``."""
    m = re.match(r"([A-Za-z_][\w.\[\]]*)", message)
    if not m:
        return None
    key = re.sub(r"\[\d+\]", "", m.group(1)).split(".")
    key = [k for k in key if k not in ("value", "unit", "min", "max", "n")] or key
    needle = f'"{key[-1]}"'
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return None
