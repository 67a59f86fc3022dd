"""Run configuration: a TOML document whose physical values carry explicit units.

Quantities are written as strings such as ``"500 G"``, ``"20 MHz"``,
``"1.85 us"``, ``"5 ns"`` or ``"90 deg"`` and converted to the internal units
(G, rad/µs, µs, rad). Frequencies are read as cyclic frequencies, i.e.
``"20 MHz"`` becomes 2π·20 rad/µs. Unknown keys and missing required keys
are reported with their full dotted path.
"""
import hashlib
import json
import re
from dataclasses import dataclass

import numpy as np
import tomli

TWO_PI = 2.0 * np.pi

_UNITS = {
    "field": {"G": 1.0, "mG": 1e-3, "kG": 1e3, "T": 1e4, "mT": 10.0},
    # cyclic frequency -> rad/µs
    "frequency": {"Hz": TWO_PI * 1e-6, "kHz": TWO_PI * 1e-3, "MHz": TWO_PI, "GHz": TWO_PI * 1e3, "rad/us": 1.0},
    "time": {"s": 1e6, "ms": 1e3, "us": 1.0, "µs": 1.0, "ns": 1e-3, "ps": 1e-6},
    "angle": {"rad": 1.0, "mrad": 1e-3, "deg": np.pi / 180.0},
    "intensity": {"W/cm2": 1.0, "W/cm^2": 1.0, "mW/cm2": 1e-3, "W/m2": 1e-4},
}
_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(\S+)\s*$")


class ConfigError(ValueError):
    """Invalid run configuration (maps to CLI exit code 2)."""


def parse_quantity(text, kind, path="value"):
    """Convert ``"<number> <unit>"`` to internal units of ``kind``."""
    if not isinstance(text, str):
        raise ConfigError(f"{path}: expected a quantity string with a unit, got {text!r}")
    m = _QUANTITY.match(text)
    if not m:
        raise ConfigError(f"{path}: cannot parse quantity {text!r}; expected '<number> <unit>'")
    number, unit = float(m.group(1)), m.group(2)
    table = _UNITS[kind]
    if unit not in table:
        raise ConfigError(f"{path}: unit {unit!r} is not a {kind} unit (allowed: {', '.join(table)})")
    return number * table[unit]


def quantity_kind(text):
    """Name of the unit family of a quantity string, or ``None``."""
    m = _QUANTITY.match(text) if isinstance(text, str) else None
    if not m:
        return None
    for kind, table in _UNITS.items():
        if m.group(2) in table:
            return kind
    return None


# --- schema -----------------------------------------------------------------------
# leaf spec: (kind, required, default) with kind one of the unit families or
# "number", "int", "bool", "str", "detuning", ("list", kind), ("choice", options)


@dataclass(frozen=True)
class Field:
    kind: object
    required: bool = False
    default: object = None


SCHEMA = {
    "atom": {
        "nuclear_spin": Field("number"),
        "g_i": Field("number"),
        "g_j": Field("number"),
        "hyperfine_a": Field("frequency"),
        "quadrupole_q": Field("frequency"),
        "gamma": Field("frequency"),
    },
    "drive": {
        "b_field": Field("field", True),
        "omega_e": Field("frequency", True),
        "period": Field("time"),
        "theta": Field("angle", default=np.pi / 2),
        "detuning": Field("detuning", default=None),
        "envelope_phase": Field("angle", default=0.0),
    },
    "evolution": {
        "horizon": Field("time", default=50.0),
        "sample_dt": Field("time", default=0.005),
        "method": Field(("choice", ("magnus", "rk")), default="magnus"),
        "closed": Field("bool", default=False),
        "step_factor": Field("number", default=2.0),
    },
    "levels": {
        "b_min": Field("field", default=0.0),
        "b_max": Field("field", default=1000.0),
        "b_step": Field("field", default=1.0),
    },
    "scan": {
        "t_min": Field("time", default=0.01),
        "t_max": Field("time", default=5.0),
        "coarse_step": Field("time", default=0.025),
        "refine_steps": Field(("list", "time"), default=[0.005, 0.001]),
        "polish": Field("bool", default=True),
        "periods": Field(("list", "time")),
    },
    "grid": {
        "b_list": Field(("list", "field"), default=[200.0, 300.0, 500.0, 1000.0]),
        "omega_list": Field(("list", "frequency"), default=[TWO_PI * w for w in (20, 30, 40, 50, 60, 80)]),
    },
    "floquet": {
        "t_min": Field("time", True),
        "t_max": Field("time", True),
        "t_step": Field("time", default=0.005),
    },
    "stability": {
        "T": Field(("list", "time")),
        "B": Field(("list", "field")),
        "omega_e": Field(("list", "frequency")),
        "theta": Field(("list", "angle")),
        "detuning": Field(("list", "frequency")),
        "pairs": Field("bool", default=True),
    },
    "noise": {
        "omega_n": Field("frequency", True),
        "frequency_convention": Field(("choice", ("cyclic", "angular")), default="cyclic"),
        "source": Field("sources", True),
    },
    "convert": {
        "value": Field("quantity", True),
    },
}

NOISE_SOURCE = {
    "name": Field("str", True),
    "parameter": Field("str", True),
    "psd": Field("number"),
    "phase_noise": Field("number"),
    "slope_sq": Field("number"),
    "delta_x": Field("number"),
    "p_delta_x": Field("number"),
}


def _convert(value, kind, path):
    if isinstance(kind, tuple) and kind[0] == "list":
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list")
        return [_convert(v, kind[1], f"{path}[{i}]") for i, v in enumerate(value)]
    if isinstance(kind, tuple) and kind[0] == "choice":
        if value not in kind[1]:
            raise ConfigError(f"{path}: expected one of {kind[1]}, got {value!r}")
        return value
    if kind in _UNITS:
        return parse_quantity(value, kind, path)
    if kind == "number":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if kind == "detuning":
        if value == "auto":
            return None
        return parse_quantity(value, "frequency", path)
    if kind == "quantity":
        k = quantity_kind(value)
        if k not in ("frequency", "intensity"):
            raise ConfigError(f"{path}: expected a frequency or intensity quantity, got {value!r}")
        return (k, parse_quantity(value, k, path))
    if kind == "sources":
        if not isinstance(value, list) or not value:
            raise ConfigError(f"{path}: expected a non-empty array of tables")
        return [_section(v, NOISE_SOURCE, f"{path}[{i}]") for i, v in enumerate(value)]
    raise AssertionError(kind)


def _section(raw, schema, path):
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a table")
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}: unknown key")
    out = {}
    for key, spec in schema.items():
        if key in raw:
            out[key] = _convert(raw[key], spec.kind, f"{path}.{key}")
        elif spec.required:
            raise ConfigError(f"{path}.{key}: missing required key")
        else:
            out[key] = spec.default
    return out


@dataclass(frozen=True)
class RunConfig:
    """Parsed configuration. ``sections`` holds converted values; ``raw`` the document."""

    raw: dict
    sections: dict

    def section(self, name):
        if name not in self.sections:
            raise ConfigError(f"{name}: missing required section")
        return self.sections[name]

    def has(self, name):
        return name in self.sections

    def hash(self, extra=None):
        return config_hash(self.raw, extra)


def parse_config(raw, required=()):
    """Validate a configuration mapping against the schema."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a table")
    unknown = sorted(set(raw) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown section")
    for name in required:
        if name not in raw:
            raise ConfigError(f"{name}: missing required section")
    sections = {name: _section(body, SCHEMA[name], name) for name, body in raw.items()}
    return RunConfig(raw, sections)


def load_config(path, required=()):
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return parse_config(raw, required)


def loads_config(text, required=()):
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    return parse_config(raw, required)


def config_hash(raw, extra=None):
    """sha256 of the canonical JSON form of the document (and optional run flags)."""
    doc = {"config": raw, "run": extra or {}}
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()


def atom_from_config(cfg):
    from .atom import AtomSpec

    if not cfg.has("atom"):
        return AtomSpec()
    kw = {k: v for k, v in cfg.section("atom").items() if v is not None}
    return AtomSpec(**kw)


def drive_from_config(cfg, period=None):
    from .drive import DriveConfig

    d = cfg.section("drive")
    period = d["period"] if period is None else period
    if period is None:
        raise ConfigError("drive.period: missing required key")
    try:
        return DriveConfig(d["b_field"], d["omega_e"], period, d["theta"], d["detuning"], d["envelope_phase"])
    except ValueError as exc:
        raise ConfigError(f"drive: {exc}") from exc
