"""Run configuration: JSON schema, validation, defaults, overrides.

Configurations are JSON documents with nested sections.  Validation is
recursive: unknown keys are rejected by name, type mismatches report the
dotted path, and defaults are filled for everything optional.  Command-line
overrides use dotted paths (``--set grid.N1=64``).
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from cns.grid import SlabGrid

MODES = ("simulate", "verify-transform", "mms", "energy-report", "gen-data")

_TWO_PI = 2.0 * math.pi

# section -> key -> (default, type); numbers typed float accept ints too.
_SCHEMA = {
    "grid": {
        "N1": (None, int), "N2": (None, int), "Nz": (None, int),
        "L1": (_TWO_PI, float), "L2": (_TWO_PI, float), "b": (1.0, float),
    },
    "time": {"dt": (1e-3, float), "T": (1.0, float)},
    "physics": {
        "gamma": (1.0, float), "sigma": (1.0, float), "c_hat": (1.0, float),
        "potential_slope": (0.0, float),
    },
    "picard": {
        "diff_tol": (1e-8, float), "max_sweeps": (30, int),
        "smallness_threshold": (0.1, float), "compat_tol": (1e-6, float),
    },
    "data": {"seed": (0, int), "amplitude": (0.05, float)},
    "mms": {"solver": ("parabolic", str), "kind": ("spatial", str)},
    "output": {
        "fields_every": (0, int), "energy_csv": (True, bool),
        "convergence_csv": (True, bool),
    },
}


class ConfigError(ValueError):
    """Invalid configuration document or override."""


def _coerce(value, typ, path):
    if typ is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if typ is int and isinstance(value, bool):
        raise ConfigError(f"{path}: expected int, got bool")
    if not isinstance(value, typ):
        raise ConfigError(
            f"{path}: expected {typ.__name__}, got "
            f"{type(value).__name__} ({value!r})")
    return value


def _validate_tree(doc: dict) -> dict:
    if not isinstance(doc, dict):
        raise ConfigError("configuration root must be a JSON object")
    out = {}
    for section, content in doc.items():
        if section == "mode":
            out["mode"] = _coerce(content, str, "mode")
            continue
        if section not in _SCHEMA:
            raise ConfigError(f"unknown configuration key: {section}")
        if not isinstance(content, dict):
            raise ConfigError(f"{section}: expected an object")
        for key in content:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown configuration key: "
                                  f"{section}.{key}")
        out[section] = {k: _coerce(v, _SCHEMA[section][k][1],
                                   f"{section}.{k}")
                        for k, v in content.items()}
    # fill defaults
    for section, keys in _SCHEMA.items():
        filled = out.setdefault(section, {})
        for key, (default, _typ) in keys.items():
            if key not in filled:
                if default is None:
                    raise ConfigError(f"missing required key "
                                      f"{section}.{key}")
                filled[key] = default
    return out


def _check_ranges(doc: dict) -> None:
    g = doc["grid"]
    for key in ("N1", "N2"):
        n = g[key]
        if n < 4 or n % 2:
            raise ConfigError(f"{key} must be ≥4 and even (got {n})")
    if g["Nz"] < 5:
        raise ConfigError(f"Nz must be ≥5 (got {g['Nz']})")
    for path, val in (("grid.L1", g["L1"]), ("grid.L2", g["L2"]),
                      ("grid.b", g["b"]), ("time.dt", doc["time"]["dt"]),
                      ("time.T", doc["time"]["T"]),
                      ("physics.c_hat", doc["physics"]["c_hat"]),
                      ("picard.diff_tol", doc["picard"]["diff_tol"])):
        if not val > 0:
            raise ConfigError(f"{path} must be positive (got {val})")
    for path, val in (("physics.gamma", doc["physics"]["gamma"]),
                      ("physics.sigma", doc["physics"]["sigma"]),
                      ("data.amplitude", doc["data"]["amplitude"])):
        if val < 0:
            raise ConfigError(f"{path} must be nonnegative (got {val})")
    if doc["picard"]["max_sweeps"] < 1:
        raise ConfigError("picard.max_sweeps must be ≥1")
    if doc["mms"]["solver"] not in ("parabolic", "stokes", "stationary"):
        raise ConfigError("mms.solver must be parabolic, stokes, or "
                          f"stationary (got {doc['mms']['solver']!r})")
    if doc["mms"]["kind"] not in ("spatial", "temporal"):
        raise ConfigError("mms.kind must be spatial or temporal "
                          f"(got {doc['mms']['kind']!r})")
    if "mode" in doc and doc["mode"] not in MODES:
        raise ConfigError(f"mode must be one of {', '.join(MODES)} "
                          f"(got {doc['mode']!r})")


@dataclass
class RunConfig:
    """Validated, fully-defaulted run configuration."""

    doc: dict
    mode: Optional[str] = None

    def __post_init__(self):
        self.mode = self.doc.get("mode", self.mode)

    def to_dict(self) -> dict:
        out = copy.deepcopy(self.doc)
        if self.mode is not None:
            out["mode"] = self.mode
        return out

    def build_grid(self) -> SlabGrid:
        g = self.doc["grid"]
        t = self.doc["time"]
        nt = int(round(t["T"] / t["dt"]))
        if abs(nt * t["dt"] - t["T"]) > 1e-9 * max(t["T"], 1.0):
            raise ConfigError(
                f"time.T ({t['T']}) must be an integer multiple of time.dt "
                f"({t['dt']})")
        return SlabGrid(N1=g["N1"], N2=g["N2"], Nz=g["Nz"], L1=g["L1"],
                        L2=g["L2"], b=g["b"], Nt=nt, dt=t["dt"])

    def potential(self):
        slope = self.doc["physics"]["potential_slope"]
        if slope == 0.0:
            return None
        return lambda x1, x2, Y, t: slope * Y + 0.0 * (x1 + x2 + t)

    def __getitem__(self, section):
        return self.doc[section]


def validate(doc: dict) -> RunConfig:
    """Validate a parsed JSON document and fill defaults."""
    tree = _validate_tree(doc)
    _check_ranges(tree)
    return RunConfig(doc=tree)


def parse_config(source) -> RunConfig:
    """Parse a config from a path, file object, or JSON string."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = str(source)
        if not text.lstrip().startswith("{"):
            with open(text, encoding="utf-8") as f:
                text = f.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return validate(doc)


def serialize(cfg: RunConfig) -> str:
    """Canonical JSON text; parse_config(serialize(cfg)) round-trips."""
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)


def apply_override(doc: dict, assignment: str) -> dict:
    """Apply one dotted-path override like ``grid.N1=64`` (JSON value)."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form "
                          "key.path=value")
    path, _, raw = assignment.partition("=")
    keys = path.strip().split(".")
    if not all(keys):
        raise ConfigError(f"override {assignment!r} has an empty key path")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw          # bare strings allowed unquoted
    node = doc
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {assignment!r}: {key} is not a "
                              "section")
    node[keys[-1]] = value
    return doc
