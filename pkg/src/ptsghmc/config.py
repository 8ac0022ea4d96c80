"""Run configuration: flat ``dotted.key = value`` text files.

Config files are TOML restricted to dotted keys at top level, e.g.::

    target.preset = "mix1d-4"
    oracle.mode = "injected-noise"
    oracle.noise_variance = 0.25
    ladder.R = 10

Every key has a default; a file only lists what it changes. Serializing
writes every key in schema order, so parse -> serialize -> parse is the
identity.
"""

import math
import os
import re

import tomli

from .exceptions import ConfigError
from .exchange_test import ACCEPTANCE_KINDS, NOISE_MODELS
from .model import ORACLE_MODES, PRESETS
from .tempering import PAIRINGS


def _one_of(choices):
    def check(v):
        if v not in choices:
            raise ValueError(f"must be one of {sorted(choices)}, got {v!r}")
    return check


def _preset(v):
    if v not in PRESETS:
        raise ValueError(f"unknown preset {v!r}; choose from {sorted(PRESETS)}")


def _at_least(lo, strict=False):
    def check(v):
        if v < lo or (strict and v == lo):
            raise ValueError(f"must be {'>' if strict else '>='} {lo}, got {v}")
    return check


def _theta0(v):
    if isinstance(v, str):
        if v != "random" and not re.fullmatch(r"mode:\d+", v):
            raise ValueError(f"must be 'random', 'mode:<index>' or a vector, got {v!r}")
    elif not (isinstance(v, list) and all(isinstance(x, (int, float)) for x in v)):
        raise ValueError("must be 'random', 'mode:<index>' or a list of numbers")


def _positive_list(v):
    if not isinstance(v, list) or not v or any(not isinstance(x, (int, float)) or x <= 0 for x in v):
        raise ValueError("must be a non-empty list of positive numbers")


def _gamma(v):
    if v != "auto" and not (isinstance(v, (int, float)) and v > 0):
        raise ValueError(f"must be 'auto' or a positive number, got {v!r}")


def _mass(v):
    if isinstance(v, list):
        _positive_list(v)
    elif not (isinstance(v, (int, float)) and v > 0):
        raise ValueError("must be a positive number or list")


# key -> (accepted types, default, extra check)
SCHEMA = {
    "target.preset": (str, "mix1d-4", _preset),
    "target.model_file": (str, "", None),
    "oracle.mode": (str, "injected-noise", _one_of(set(ORACLE_MODES) - {"minibatch"})),
    "oracle.noise_variance": ((int, float), 0.25, _at_least(0)),
    "ladder.R": (int, 10, _at_least(1)),
    "ladder.T_max": ((int, float), 10.0, _at_least(1)),
    "ladder.spacing": (str, "linear", _one_of({"linear", "geometric"})),
    "ladder.pairing": (str, "adjacent", _one_of(set(PAIRINGS))),
    "dynamics.step_size": ((int, float), 0.01, _at_least(0, strict=True)),
    "dynamics.steps_per_epoch": (int, 50, _at_least(1)),
    "dynamics.mass": ((int, float, list), 1.0, _mass),
    "dynamics.thermal_inertia": ((int, float), 1.0, _at_least(0, strict=True)),
    "dynamics.theta0": ((str, list), "random", _theta0),
    "exchange.test": (str, "minibatch-corrected", _one_of(set(ACCEPTANCE_KINDS))),
    "exchange.noise_model": (str, "known", _one_of(set(NOISE_MODELS))),
    "exchange.sigma_levels": (list, [0.1, 0.25, 0.5, 1.0], _positive_list),
    "exchange.gamma": ((str, int, float), "auto", _gamma),
    "exchange.K": (int, 8, _at_least(0)),
    "exchange.x_max": ((int, float), 12.0, _at_least(0, strict=True)),
    "exchange.n_grid": (int, 4001, _at_least(3)),
    "hmc.step_size": ((int, float), 0.05, _at_least(0, strict=True)),
    "hmc.leapfrog_steps": (int, 30, _at_least(0)),
    "baseline.n_samples": (int, -1, _at_least(-1)),
    "run.epochs": (int, 25000, _at_least(0)),
    "run.seed": (int, 7, _at_least(0)),
    "run.burn_in": ((int, float), 0.1, _at_least(0)),
    "diagnostics.radius_multiplier": ((int, float), 3.0, _at_least(0, strict=True)),
    "output.dir": (str, "out", None),
}


def _flatten(data, prefix=""):
    flat = {}
    for key, value in data.items():
        full = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, full + "."))
        else:
            flat[full] = value
    return flat


def _line_of(text, key):
    if text is None:
        return None
    leaf = re.escape(key.split(".")[-1])
    full = re.escape(key)
    for pattern in (rf"^\s*{full}\s*=", rf"^\s*\"?{leaf}\"?\s*="):
        for n, line in enumerate(text.splitlines(), start=1):
            if re.match(pattern, line):
                return n
    return None


class RunConfig:
    """Validated flat mapping from dotted keys to values, with schema defaults."""

    def __init__(self, values=None, text=None, source=None):
        self.values = {k: _copy(spec[1]) for k, spec in SCHEMA.items()}
        for key, value in (values or {}).items():
            self.set(key, value, text=text, source=source)
        self.validate(text=text, source=source)

    def set(self, key, value, text=None, source=None):
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}", _line_of(text, key), source)
        types, _, check = SCHEMA[key]
        if isinstance(value, bool) or not isinstance(value, types):
            if isinstance(value, int) and float in (types if isinstance(types, tuple) else (types,)):
                value = float(value)
            else:
                raise ConfigError(f"{key}: wrong type {type(value).__name__}",
                                  _line_of(text, key), source)
        if isinstance(value, float) and not math.isfinite(value):
            raise ConfigError(f"{key}: must be finite, got {value}", _line_of(text, key), source)
        if check is not None:
            try:
                check(value)
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}", _line_of(text, key), source) from None
        self.values[key] = value

    def validate(self, text=None, source=None):
        path = self.values["target.model_file"]
        if path and not os.path.exists(path):
            raise ConfigError(f"target.model_file: no such file {path!r}",
                              _line_of(text, "target.model_file"), source)
        if self.values["ladder.R"] > 1 and self.values["ladder.T_max"] <= 1:
            raise ConfigError("ladder.T_max must exceed 1 when ladder.R > 1",
                              _line_of(text, "ladder.T_max"), source)
        if not 0 <= self.values["run.burn_in"] < 1:
            raise ConfigError("run.burn_in must lie in [0, 1)", _line_of(text, "run.burn_in"), source)

    def __getitem__(self, key):
        return self.values[key]

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.values == other.values

    def copy(self):
        return RunConfig(dict(self.values))

    def to_text(self, exclude=()):
        """Flat ``key = value`` lines, every key not in ``exclude``, in schema order."""
        return "".join(f"{key} = {_format(self.values[key])}\n" for key in SCHEMA if key not in exclude)

    def to_dict(self, exclude=()):
        return {k: _copy(v) for k, v in self.values.items() if k not in exclude}

    def __repr__(self):
        return f"RunConfig({self.values!r})"


def _copy(v):
    return list(v) if isinstance(v, list) else v


def _toml_string(text):
    out = []
    for ch in text:
        if ch in ('"', "\\"):
            out.append("\\" + ch)
        elif ord(ch) < 0x20 or ord(ch) == 0x7F:
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    return '"' + "".join(out) + '"'


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return _toml_string(value)
    return "[" + ", ".join(_format(v) for v in value) + "]"


def parse_config(text, source=None):
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(str(exc), getattr(exc, "lineno", None), source) from None
    return RunConfig(_flatten(data), text=text, source=source)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), source=str(path))


def parse_override(item):
    """``key=value`` from the command line; unparseable values are strings."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    key, raw = key.strip(), raw.strip()
    try:
        value = tomli.loads(f"v = {raw}")["v"]
    except tomli.TOMLDecodeError:
        value = raw
    return key, value
