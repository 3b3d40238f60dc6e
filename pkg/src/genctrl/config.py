"""JSON run configuration: schema validation, defaults and object construction."""

import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import jsonschema
import numpy as np

from .ddpg import TrainConfig
from .dynamics import scenario_from_dict
from .grape import GrapeConfig

METHODS = ("no-control", "grape", "rl-generalize", "analytic-shift")
AXES = ("B", "direction", "omega1", "omega2", "g", "T", "gamma")

SCENARIO_DEFAULTS = {
    "example1": {"params": [1.0, math.pi / 4, math.pi / 4], "gamma": [0.2], "T": 5.0,
                 "dt": 0.1, "u_max": 3.0, "restricted": False},
    "example2": {"params": [1.0, 1.2, 0.1], "gamma": [0.1, 0.1], "T": 5.0,
                 "dt": 0.1, "u_max": 5.0, "restricted": False},
}

_number = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_triple = {"type": "array", "items": _number, "minItems": 3, "maxItems": 3}
_range = {
    "type": "object",
    "properties": {"min": _number, "max": _number, "count": {"type": "integer", "minimum": 2}},
    "required": ["min", "max", "count"],
    "additionalProperties": False,
}
_grid = {"oneOf": [{"type": "array", "items": _number, "minItems": 1}, _range]}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["scenario"],
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "scenario": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": list(SCENARIO_DEFAULTS)},
                "params": _triple,
                "gamma": {"oneOf": [{"type": "number", "minimum": 0},
                                    {"type": "array", "items": {"type": "number", "minimum": 0},
                                     "minItems": 1, "maxItems": 2}]},
                "T": _pos,
                "dt": _pos,
                "u_max": _pos,
                "restricted": {"type": "boolean"},
            },
        },
        "artifacts": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"pulse": {"type": "string"}, "actor": {"type": "string"}},
        },
        "grape": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": ["gd", "adam"]},
                "learning_rate": _pos,
                "iterations": {"type": "integer", "minimum": 0},
                "adam_betas": {"type": "array", "items": _number, "minItems": 2, "maxItems": 2},
                "adam_eps": _pos,
                "clip_to_bounds": {"type": "boolean"},
                "init": {"enum": ["zero", "random"]},
            },
        },
        "rl": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "episodes": {"type": "integer", "minimum": 0},
                "replay_capacity": {"type": "integer", "minimum": 1},
                "batch_size": {"type": "integer", "minimum": 1},
                "discount": _number,
                "actor_lr": _pos,
                "critic_lr": _pos,
                "tau": {"type": "number", "minimum": 0, "maximum": 1},
                "ou_theta": {"type": "number", "minimum": 0},
                "ou_sigma": {"type": "number", "minimum": 0},
                "hidden": {"type": "array", "items": {"type": "integer", "minimum": 1},
                           "minItems": 2, "maxItems": 2},
                "dtype": {"enum": ["float32", "float64"]},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "required": ["axis"],
            "properties": {
                "axis": {"enum": list(AXES)},
                "grid": _grid,
                "theta_grid": _grid,
                "phi_grid": _grid,
                "methods": {"type": "array", "items": {"enum": list(METHODS)},
                            "minItems": 1, "uniqueItems": True},
            },
        },
        "t_sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"grid": _grid, "method": {"enum": ["no-control", "grape"]}},
        },
        "shift": {
            "type": "object",
            "additionalProperties": False,
            "required": ["target"],
            "properties": {"target": _triple},
        },
        "adaptive": {
            "type": "object",
            "additionalProperties": False,
            "required": ["true_params"],
            "properties": {
                "true_params": _triple,
                "initial_guess": _triple,
                "method": {"enum": list(METHODS)},
                "rounds": {"type": "integer", "minimum": 1},
            },
        },
    },
}


class ConfigError(ValueError):
    pass


@dataclass
class SweepSpec:
    axis: str
    grid: list
    methods: tuple
    base_scenario: object
    pulse_path: Optional[str] = None
    actor_path: Optional[str] = None
    grape: GrapeConfig = field(default_factory=GrapeConfig)
    grape_init: str = "zero"


@dataclass
class RunConfig:
    raw: dict
    scenario: object
    seed: int
    base_dir: str = "."

    def artifact(self, name):
        path = self.raw.get("artifacts", {}).get(name)
        if path is None:
            return None
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)

    def grape_config(self):
        g = dict(self.raw.get("grape", {}))
        g.pop("init", None)
        if "adam_betas" in g:
            g["adam_betas"] = tuple(g["adam_betas"])
        return GrapeConfig(**g)

    @property
    def grape_init(self):
        return self.raw.get("grape", {}).get("init", "zero")

    def train_config(self, seed=None):
        return TrainConfig(seed=self.seed if seed is None else seed, **self.raw.get("rl", {}))

    def sweep_spec(self):
        if "sweep" not in self.raw:
            raise ConfigError("config has no 'sweep' section")
        s = self.raw["sweep"]
        if s["axis"] == "direction":
            thetas = expand_grid(s.get("theta_grid", {"min": 0.0, "max": math.pi, "count": 33}))
            phis = expand_grid(s.get("phi_grid", {"min": 0.0, "max": 2 * math.pi, "count": 65}))
            grid = [(t, p) for t in thetas for p in phis]
        else:
            grid = expand_grid(s["grid"]) if "grid" in s else default_grid(s["axis"], self.scenario)
        return SweepSpec(
            axis=s["axis"],
            grid=grid,
            methods=tuple(s.get("methods", ["no-control"])),
            base_scenario=self.scenario,
            pulse_path=self.artifact("pulse"),
            actor_path=self.artifact("actor"),
            grape=self.grape_config(),
            grape_init=self.grape_init,
        )

    def t_grid(self):
        t = self.raw.get("t_sweep", {})
        if "grid" in t:
            return expand_grid(t["grid"])
        return [round(v, 10) for v in np.arange(0.5, 8.0 + 1e-9, self.scenario.dt)]


def expand_grid(g):
    if isinstance(g, dict):
        return [float(v) for v in np.linspace(g["min"], g["max"], g["count"])]
    return [float(v) for v in g]


def default_grid(axis, scenario):
    """Figure-style default ranges around the base point."""
    x = scenario.params
    w = 2 * math.pi / scenario.T
    if axis == "B":
        return expand_grid({"min": x[0] - w, "max": x[0] + w, "count": 41})
    if axis in ("omega1", "omega2"):
        c = x[0] if axis == "omega1" else x[1]
        return expand_grid({"min": c - w / 2, "max": c + w / 2, "count": 41})
    if axis == "g":
        return expand_grid({"min": x[2] - w / 2, "max": x[2] + w / 2, "count": 41})
    if axis == "T":
        return [round(v, 10) for v in np.arange(1.0, 8.0 + 1e-9, 1.0)]
    if axis == "gamma":
        return expand_grid({"min": 0.0, "max": 0.5, "count": 11})
    raise ConfigError(f"axis {axis!r} has no default grid")


def fill_scenario_defaults(d):
    out = dict(SCENARIO_DEFAULTS[d["kind"]])
    out.update(d)
    out["kind"] = d["kind"]
    if not isinstance(out["gamma"], list):
        out["gamma"] = [out["gamma"]]
    return out


def validate(raw, base_dir="."):
    """Validate a parsed config dict and return a :class:`RunConfig`."""
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as err:
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"config field {where}: {err.message}") from None
    scen = fill_scenario_defaults(raw["scenario"])
    if scen["kind"] == "example1" and len(scen["gamma"]) != 1:
        raise ConfigError("config field scenario/gamma: example1 takes a single rate")
    if scen["kind"] == "example2" and len(scen["gamma"]) != 2:
        raise ConfigError("config field scenario/gamma: example2 takes two rates")
    try:
        scenario = scenario_from_dict(scen)
    except ValueError as err:
        raise ConfigError(f"config field scenario: {err}") from None
    raw = dict(raw, scenario=scen)
    return RunConfig(raw=raw, scenario=scenario, seed=int(raw.get("seed", 0)), base_dir=base_dir)


def load_config(path):
    with open(path) as fh:
        text = fh.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: line {err.lineno} column {err.colno}: {err.msg}") from None
    return validate(raw, base_dir=os.path.dirname(os.path.abspath(path)))
