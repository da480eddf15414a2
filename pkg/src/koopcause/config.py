"""Experiment configuration: JSON schema, defaults and cross-field checks.

A config names one analysis and everything it needs. Validation reports every
problem it finds (schema and cross-field) instead of stopping at the first.
"""

from __future__ import annotations

import copy
import hashlib
import json
from importlib import resources
from pathlib import Path

import jsonschema

from .errors import ContractViolation
from .partitions import ComponentPartition

__all__ = [
    "ANALYSES",
    "SCHEMA",
    "ConfigError",
    "load_config",
    "load_recipe",
    "recipe_names",
    "resolve",
    "validate_config",
    "fingerprint",
]

ANALYSES = ("simulate", "measure", "sweep", "forecast", "counterfactual", "l96-cumulative", "l96-instant",
            "perturbation")
_ROSSLER_ONLY = {"measure", "sweep", "forecast", "counterfactual"}
_L96_ONLY = {"l96-cumulative", "l96-instant", "perturbation"}

_U64 = {"type": "integer", "minimum": 0, "maximum": 2**64 - 1}
_POS_INT = {"type": "integer", "minimum": 1}
_NONNEG_INT = {"type": "integer", "minimum": 0}
_POS = {"type": "number", "exclusiveMinimum": 0}


def _obj(properties, required=()):
    return {"type": "object", "additionalProperties": False, "properties": properties, "required": list(required)}


SCHEMA = _obj({
    "experiment_id": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
    "seed": _U64,
    "system": _obj({
        "kind": {"enum": ["rossler", "lorenz96"]},
        "a": {"type": "number"}, "b": {"type": "number"}, "d": {"type": "number"},
        "c1": {"type": "number"}, "c2": {"type": "number"},
        "phi1": {"type": "number"}, "phi2": {"type": "number"},
        "n_sites": {"type": "integer", "minimum": 4},
        "forcing": {"type": "number", "minimum": 0},
    }, ["kind"]),
    "integration": _obj({
        "dt": _POS, "n_steps": _POS_INT, "burn_in": _NONNEG_INT, "seed": _U64,
        "ic_box": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
    }),
    "partition": _obj({
        "components": {"type": "object", "minProperties": 1,
                       "additionalProperties": {"type": "array", "items": _NONNEG_INT}},
        "effect": {"type": "string"},
        "cause": {"type": "string"},
    }, ["components", "effect", "cause"]),
    "dictionary": _obj({
        "m_features": _POS_INT,
        "bandwidth": {"anyOf": [{"type": "null"}, _POS, {"type": "array", "items": _POS, "minItems": 1}]},
        "seed": _U64,
        "dim_scaling": {"type": "boolean"},
    }),
    "split": _obj({
        "train_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "mode": {"enum": ["contiguous", "random"]},
        "seed": _U64,
    }),
    "fit": _obj({"cutoff": {"type": "number", "minimum": 0}, "ridge_per_row": {"type": "number", "minimum": 0}}),
    "analysis": _obj({
        "kind": {"enum": list(ANALYSES)},
        "shift": _POS_INT,
        "shifts": {"type": "array", "items": _POS_INT, "minItems": 1},
        "n_permutations": _NONNEG_INT,
        "null_mode": {"enum": ["rotate", "shuffle"]},
        "null_seed": _U64,
        "horizon": _POS_INT,
        "initial_index": _NONNEG_INT,
        "target": _NONNEG_INT,
        "delta_ns": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
        "fine_dt": _POS,
        "couplings": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "vary": {"enum": ["c1", "c2"]},
        "counterfactual": _obj({"c1": {"type": "number"}, "c2": {"type": "number"}}),
        "indices": {"type": "array", "items": _NONNEG_INT, "minItems": 1},
        "horizon_steps": {"anyOf": [{"type": "null"}, _POS_INT]},
        "n_ensemble": _POS_INT,
        "site": _NONNEG_INT,
        "epsilon": {"type": "number"},
        "offsets": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
        "threshold": _POS,
    }, ["kind"]),
    "output": _obj({"save_trajectory": {"type": "boolean"}, "save_models": {"type": "boolean"}}),
}, ["experiment_id", "system", "analysis"])

_SYSTEM_DEFAULTS = {
    "rossler": {"a": 0.2, "b": 0.2, "d": 5.7, "c1": 0.5, "c2": 0.0, "phi1": 1.0, "phi2": 1.0},
    "lorenz96": {"n_sites": 101, "forcing": 4.0},
}
_SYSTEM_KEYS = {k: set(v) for k, v in _SYSTEM_DEFAULTS.items()}
_IC_BOX = {"rossler": [-5.0, 5.0], "lorenz96": [-1.0, 1.0]}
_ANALYSIS_DEFAULTS = {
    "simulate": {},
    "measure": {"shift": 1000, "n_permutations": 0, "null_mode": "rotate"},
    "sweep": {"shifts": list(range(100, 2001, 100)), "n_permutations": 0, "null_mode": "rotate"},
    "forecast": {"shift": 1, "horizon": 2000, "initial_index": 0},
    "counterfactual": {"couplings": [0.0, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5, 2.0], "vary": "c1",
                       "indices": [0, 1, 2], "horizon_steps": None, "n_ensemble": 20},
    "l96-cumulative": {"shifts": [500, 1000], "n_permutations": 0, "null_mode": "rotate"},
    "l96-instant": {"shift": 1, "fine_dt": 0.001, "n_permutations": 0, "null_mode": "rotate"},
    "perturbation": {"epsilon": 1e-3, "offsets": [-30, -20, -15, -10, -5, 5, 10, 15, 20, 30],
                     "threshold": 1e-4},
}
_ANALYSIS_KEYS = {k: set(v) | {"kind", "null_seed", "target", "delta_ns", "site", "counterfactual"}
                  for k, v in _ANALYSIS_DEFAULTS.items()}
_ANALYSIS_KEYS["simulate"] = {"kind"}
_ANALYSIS_KEYS["counterfactual"] -= {"target", "delta_ns", "site", "null_seed"}
_ANALYSIS_KEYS["perturbation"] = set(_ANALYSIS_DEFAULTS["perturbation"]) | {"kind", "site"}
for _k in ("measure", "sweep", "forecast"):
    _ANALYSIS_KEYS[_k] -= {"target", "delta_ns", "site", "counterfactual"}
for _k in ("l96-cumulative", "l96-instant"):
    _ANALYSIS_KEYS[_k] -= {"site", "counterfactual"}


class ConfigError(ContractViolation):
    """Raised with the full list of violations in ``.violations``."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def _path(error) -> str:
    return "/" + "/".join(str(p) for p in error.absolute_path) if error.absolute_path else "/"


def _schema_violations(cfg) -> list:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    return [f"{_path(e)}: {e.message}" for e in errors]


def resolve(cfg: dict, seed: int | None = None) -> dict:
    """Config with every default filled in; ``seed`` overrides the master seed.

    Sub-seeds (integration, dictionary, split, null) default to the master
    seed. The input must already satisfy the schema.
    """
    out = copy.deepcopy(cfg)
    if seed is not None:
        out["seed"] = int(seed)
    master = out.setdefault("seed", 0)
    kind = out["system"]["kind"]
    out["system"] = {"kind": kind, **_SYSTEM_DEFAULTS[kind],
                     **{k: v for k, v in out["system"].items() if k != "kind"}}
    integ = out.setdefault("integration", {})
    integ.setdefault("dt", 0.01)
    integ.setdefault("n_steps", 10_000)
    integ.setdefault("burn_in", 10_000)
    integ.setdefault("seed", master)
    integ.setdefault("ic_box", list(_IC_BOX[kind]))
    analysis = out["analysis"]
    a_kind = analysis["kind"]
    for key, value in _ANALYSIS_DEFAULTS[a_kind].items():
        analysis.setdefault(key, copy.deepcopy(value))
    if a_kind in ("l96-cumulative", "l96-instant", "perturbation"):
        n = out["system"].get("n_sites", 101)
        analysis.setdefault("target" if a_kind != "perturbation" else "site", n // 2)
    if "n_permutations" in analysis:
        analysis.setdefault("null_seed", master)
    if a_kind not in ("simulate", "counterfactual", "perturbation"):
        d = out.setdefault("dictionary", {})
        d.setdefault("m_features", 1024 if kind == "lorenz96" else 256)
        d.setdefault("bandwidth", None)
        d.setdefault("seed", master)
        d.setdefault("dim_scaling", kind == "lorenz96")
        sp = out.setdefault("split", {})
        sp.setdefault("train_fraction", 0.8)
        sp.setdefault("mode", "contiguous")
        sp.setdefault("seed", master)
        from .causality import DEFAULT_RIDGE_PER_ROW
        from .dmd import DEFAULT_CUTOFF
        ft = out.setdefault("fit", {})
        ft.setdefault("cutoff", DEFAULT_CUTOFF)
        ft.setdefault("ridge_per_row", DEFAULT_RIDGE_PER_ROW)
    o = out.setdefault("output", {})
    o.setdefault("save_trajectory", True)
    o.setdefault("save_models", a_kind in ("measure", "forecast"))
    return out


def _cross_field(cfg: dict) -> list:
    """Semantic checks on a resolved config."""
    v = []
    system, analysis = cfg["system"], cfg["analysis"]
    kind, a_kind = system["kind"], analysis["kind"]
    if a_kind in _ROSSLER_ONLY and kind != "rossler":
        v.append(f"/analysis/kind: '{a_kind}' requires system kind 'rossler'")
    if a_kind in _L96_ONLY and kind != "lorenz96":
        v.append(f"/analysis/kind: '{a_kind}' requires system kind 'lorenz96'")
    extra = sorted(set(system) - {"kind"} - _SYSTEM_KEYS[kind])
    if extra:
        v.append(f"/system: keys {extra} do not apply to '{kind}'")
    extra = sorted(set(analysis) - _ANALYSIS_KEYS[a_kind])
    if extra:
        v.append(f"/analysis: keys {extra} do not apply to '{a_kind}'")

    integ = cfg["integration"]
    lo, hi = integ["ic_box"]
    if not lo < hi:
        v.append("/integration/ic_box: lower bound must be below upper bound")
    rows = integ["n_steps"] + 1
    n_dims = 6 if kind == "rossler" else system.get("n_sites", 101)

    needs_partition = a_kind in ("measure", "sweep", "forecast")
    if needs_partition and "partition" not in cfg:
        v.append(f"/partition: required for '{a_kind}'")
    if "partition" in cfg:
        part = cfg["partition"]
        try:
            p = ComponentPartition({k: list(x) for k, x in part["components"].items()}, n_dims)
        except ContractViolation as exc:
            v.append(f"/partition/components: {exc}")
        else:
            for role in ("effect", "cause"):
                if part[role] not in p.components:
                    v.append(f"/partition/{role}: unknown component '{part[role]}'")
        if part["effect"] == part["cause"]:
            v.append("/partition: effect and cause must differ")

    shifts = analysis.get("shifts", [analysis["shift"]] if "shift" in analysis and a_kind != "l96-instant" else [])
    for i, s in enumerate(shifts):
        if s >= rows - 1:
            where = f"/analysis/shifts/{i}" if "shifts" in analysis else "/analysis/shift"
            v.append(f"{where}: shift {s} leaves fewer than 2 rows of a {rows}-row trajectory")
    if a_kind == "sweep" and shifts != sorted(shifts):
        v.append("/analysis/shifts: must be sorted ascending")
    if a_kind == "l96-instant":
        if analysis["shift"] >= rows - 1:
            v.append(f"/analysis/shift: shift {analysis['shift']} leaves fewer than 2 rows")
        if analysis["fine_dt"] >= integ["dt"]:
            v.append("/analysis/fine_dt: must be smaller than integration dt")

    if kind == "lorenz96":
        n = system.get("n_sites", 101)
        for key in ("target", "site"):
            if key in analysis and analysis[key] >= n:
                v.append(f"/analysis/{key}: {analysis[key]} is not a site of an {n}-site ring")
        for i, dn in enumerate(analysis.get("delta_ns", [])):
            if dn == 0 or abs(dn) > n - 1:
                v.append(f"/analysis/delta_ns/{i}: {dn} outside +-1..{n - 1}")
        if a_kind == "perturbation":
            for i, off in enumerate(analysis["offsets"]):
                if off == 0 or abs(off) >= n:
                    v.append(f"/analysis/offsets/{i}: {off} outside +-1..{n - 1}")
    if a_kind == "counterfactual":
        for i, idx in enumerate(analysis["indices"]):
            if idx >= 6:
                v.append(f"/analysis/indices/{i}: {idx} is not a Rössler state index")
        hs = analysis["horizon_steps"]
        if hs is not None and hs < 2:
            v.append("/analysis/horizon_steps: need at least 2 steps")

    bw = cfg.get("dictionary", {}).get("bandwidth")
    if isinstance(bw, list) and len(bw) != n_dims:
        v.append(f"/dictionary/bandwidth: {len(bw)} entries for a {n_dims}-dimensional state")
    return v


def validate_config(cfg) -> list:
    """Every schema and cross-field violation as ``"/json/path: message"`` strings."""
    if not isinstance(cfg, dict):
        return ["/: config must be a JSON object"]
    violations = _schema_violations(cfg)
    if violations:
        return violations
    return _cross_field(resolve(cfg))


def load_config(path) -> dict:
    """Parse a JSON config; syntax errors are reported with line and column."""
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}"]) from None


def recipe_names() -> list:
    return sorted(p.name[:-5] for p in resources.files("koopcause.recipes").iterdir() if p.name.endswith(".json"))


def load_recipe(name: str) -> dict:
    res = resources.files("koopcause.recipes") / f"{name}.json"
    if not res.is_file():
        raise ConfigError([f"unknown recipe '{name}'; available: {', '.join(recipe_names())}"])
    return json.loads(res.read_text())


def fingerprint(resolved: dict) -> str:
    """SHA-256 of the canonical JSON form of a resolved config."""
    text = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()
