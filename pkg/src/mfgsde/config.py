"""Run configuration: schema, loading, defaults and the semantic hash.

Configs are YAML or JSON documents. Validation is strict: unknown keys are
rejected at every level and ``seed`` is mandatory. Defaults are filled in
after validation, so the hash of a config that spells out a default equals the
hash of one that omits it.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path
from typing import Any

import jsonschema
import yaml

from .coefficients import FAMILIES
from .errors import ConfigurationError
from .tangent import KINDS
from .verify.bounds import LEMMAS

__all__ = [
    "SCHEMA_VERSION",
    "EXPERIMENT_TYPES",
    "DEFAULT_TOLERANCES",
    "PARAM_DEFAULTS",
    "schema",
    "load_config",
    "validate",
    "normalize",
    "config_hash",
]

SCHEMA_VERSION = 1

FD_TYPES = ("fd_check_x", "fd_check_xi", "fd_check_xi_frozen", "fd_check_xx", "fd_check_x_xi",
            "fd_check_concatenated")
EXPERIMENT_TYPES = ("solve", "concatenation_identity", "tangent", *FD_TYPES, "ratio_audit",
                    "appendix_check", "distribution", "probe_assumptions", "interchange")

DEFAULT_TOLERANCES = {
    "order_window": [1.7, 2.3],
    "ratio_window": [0.15, 0.40],
    "fp_floor": 1e-10,
    "safety_factor": 4.0,
    "identity": 1e-12,
    "interchange": 1e-9,
    "assumptions": 1e-9,
    "shift_relative": 0.02,
    "axioms": 1e-12,
}

# Keys whose value does not change any computed number.
_NON_SEMANTIC = ("output_dir",)

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_vec = {"oneOf": [_num, {"type": "array", "items": _num, "minItems": 1}]}
_count = {"type": "integer", "minimum": 1}
_pair = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_eps = {"type": "array", "items": _pos, "minItems": 2}


def _obj(props: dict, required: tuple = ()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_SIGMA = {"oneOf": [
    _obj({"type": {"const": "interval"}, "low": _nonneg, "high": _nonneg},
         ("type", "low", "high")),
    _obj({"type": {"const": "vertices"},
          "matrices": {"type": "array", "minItems": 1,
                       "items": {"type": "array", "items": {"type": "array", "items": _num}}}},
         ("type", "matrices")),
]}

_ENSEMBLE_PROPS = {
    "sigma": _SIGMA,
    "grid": _obj({"t_start": _num, "t_end": _num, "steps": _count}, ("t_end", "steps")),
    "scenario_count": _count,
    "path_count": _count,
    "macro_blocks": _count,
}
_ENSEMBLE = _obj(_ENSEMBLE_PROPS, ("sigma", "grid", "scenario_count", "path_count"))
_ENSEMBLE_OVERRIDE = _obj(_ENSEMBLE_PROPS)

_COEFFICIENTS = _obj({"family": {"enum": list(FAMILIES)}, "params": {"type": "object"}},
                     ("family",))

_INITIAL = _obj({"mean": _vec, "scale": _nonneg, "point": _vec})

# null means "use the built-in default"; normalized configs carry it explicitly
_FD_COMMON = {"epsilons": {"anyOf": [_eps, {"type": "null"}]}, "direction_scale": _pos}

_PARAMS = {
    "solve": _obj({"save_tensor": {"type": "boolean"}}),
    "concatenation_identity": _obj({}),
    "tangent": _obj({"kind": {"enum": list(KINDS)}, "save_tensor": {"type": "boolean"},
                     "direction_scale": _pos, "mixed": {"enum": ["dxdxi", "dxidx"]}},
                    ("kind",)),
    "fd_check_x": _obj(_FD_COMMON),
    "fd_check_xi": _obj({**_FD_COMMON, "start": {"enum": ["zero", "eta"]}}),
    "fd_check_xi_frozen": _obj({**_FD_COMMON, "start": {"enum": ["zero", "eta"]}}),
    "fd_check_xx": _obj(_FD_COMMON),
    "fd_check_x_xi": _obj({**_FD_COMMON, "sweep": {"enum": ["x", "xi"]},
                           "mixed": {"enum": ["dxdxi", "dxidx"]},
                           "start": {"enum": ["zero", "eta"]}}),
    "fd_check_concatenated": _obj(_FD_COMMON),
    "ratio_audit": _obj({"lemma": {"enum": ["all", *LEMMAS]},
                         "p": {"anyOf": [{"type": "number", "minimum": 2}, {"type": "null"}]},
                         "probes": _count, "x_range": _pos, "xi_scale": _pos}),
    "appendix_check": _obj({"p": {"type": "array", "items": {"type": "integer", "minimum": 2},
                                  "minItems": 1},
                            "probes": _count, "coordinate": {"type": "integer", "minimum": 0}}),
    "distribution": _obj({"shift": _num, "probes": _count, "axiom_probes": _count}),
    "probe_assumptions": _obj({"probes": _count, "x_range": _pos}),
    "interchange": _obj({"probes": _count}),
}

_FD_DEFAULTS = {"epsilons": None, "direction_scale": 1.0}
PARAM_DEFAULTS = {
    "solve": {"save_tensor": True},
    "concatenation_identity": {},
    "tangent": {"save_tensor": True, "direction_scale": 1.0, "mixed": "dxdxi"},
    "fd_check_x": dict(_FD_DEFAULTS),
    "fd_check_xi": {**_FD_DEFAULTS, "start": "zero"},
    "fd_check_xi_frozen": {**_FD_DEFAULTS, "start": "zero"},
    "fd_check_xx": dict(_FD_DEFAULTS),
    "fd_check_x_xi": {**_FD_DEFAULTS, "sweep": "x", "mixed": "dxdxi", "start": "zero"},
    "fd_check_concatenated": dict(_FD_DEFAULTS),
    "ratio_audit": {"lemma": "all", "p": None, "probes": 10, "x_range": 1.0, "xi_scale": 1.0},
    "appendix_check": {"p": [2, 4], "probes": 10, "coordinate": 0},
    "distribution": {"shift": 0.3, "probes": 10, "axiom_probes": 100},
    "probe_assumptions": {"probes": 64, "x_range": 2.0},
    "interchange": {"probes": 100},
}


def _experiment_schema() -> dict:
    branches = []
    for t in EXPERIMENT_TYPES:
        branches.append({"if": {"properties": {"type": {"const": t}}},
                         "then": {"properties": {"params": _PARAMS[t]}}})
    return {
        "type": "object",
        "properties": {
            "type": {"enum": list(EXPERIMENT_TYPES)},
            "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
            "params": {"type": "object"},
            "ensemble": _ENSEMBLE_OVERRIDE,
            "coefficients": _COEFFICIENTS,
        },
        "required": ["type"],
        "additionalProperties": False,
        "allOf": branches,
    }


def schema() -> dict:
    """JSON schema of a run config."""
    tol = _obj({
        "order_window": _pair, "ratio_window": _pair, "fp_floor": _nonneg,
        "safety_factor": _pos, "identity": _nonneg, "interchange": _nonneg,
        "assumptions": _nonneg, "shift_relative": _nonneg, "axioms": _nonneg,
    })
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "mfgsde run config",
        **_obj({
            "schema_version": {"const": SCHEMA_VERSION},
            "seed": {"type": "integer", "minimum": 0},
            "output_dir": {"type": "string"},
            "ensemble": _ENSEMBLE,
            "coefficients": _COEFFICIENTS,
            "initial": _INITIAL,
            "tolerances": tol,
            "experiments": {"type": "array", "items": _experiment_schema(), "minItems": 1},
        }, ("schema_version", "seed", "ensemble", "coefficients", "experiments")),
    }


def validate(doc: Any) -> None:
    """Raise :class:`ConfigurationError` with every schema violation listed."""
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{'/'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}" for e in errors]
        raise ConfigurationError("invalid config:\n  " + "\n  ".join(lines))
    names = [e.get("name", e["type"]) for e in doc["experiments"]]
    dup = sorted({n for n in names if names.count(n) > 1})
    if dup:
        raise ConfigurationError(f"experiment names must be unique, repeated: {dup} "
                                 "(give each a distinct 'name')")


def normalize(doc: dict) -> dict:
    """Return a validated copy with every default filled in."""
    validate(doc)
    out = copy.deepcopy(doc)
    ens = out["ensemble"]
    ens["grid"].setdefault("t_start", 0.0)
    ens.setdefault("macro_blocks", 4)
    out["coefficients"].setdefault("params", {})
    init = out.setdefault("initial", {})
    init.setdefault("mean", 0.0)
    init.setdefault("scale", 1.0)
    init.setdefault("point", 0.0)
    out["tolerances"] = {**DEFAULT_TOLERANCES, **out.get("tolerances", {})}
    for e in out["experiments"]:
        e.setdefault("name", e["type"])
        e["params"] = {**PARAM_DEFAULTS[e["type"]], **e.get("params", {})}
        if "coefficients" in e:
            e["coefficients"].setdefault("params", {})
    return out


def load_config(path: str | Path) -> dict:
    """Parse, validate and normalize a config file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigurationError(f"config {path} must be a mapping")
    return normalize(doc)


def _canonical(v: Any) -> Any:
    # 1 and 1.0 mean the same thing in every numeric field
    if isinstance(v, dict):
        return {k: _canonical(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_canonical(x) for x in v]
    if isinstance(v, int) and not isinstance(v, bool) and abs(v) < 2 ** 53:
        return float(v)
    return v


def config_hash(cfg: dict) -> str:
    """SHA-256 of the canonical JSON of the semantic part of a normalized config."""
    sem = _canonical({k: v for k, v in cfg.items() if k not in _NON_SEMANTIC})
    blob = json.dumps(sem, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()
