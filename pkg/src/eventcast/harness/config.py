"""Experiment configuration: JSON schema validation and hashing."""

from __future__ import annotations

import hashlib
import json

from dataclasses import dataclass, field

import jsonschema

SCENARIOS = ("experts", "groupwise", "combinatorial", "efg", "predsets",
             "calibration-1d")

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["scenario", "t_rounds", "seeds"],
    "properties": {
        "scenario": {"enum": list(SCENARIOS)},
        "t_rounds": {"type": "integer", "minimum": 1},
        "seeds": {"type": "array", "items": {"type": "integer"},
                  "minItems": 1},
        "t_max": {"type": "integer", "minimum": 1},
        "solver": {"enum": ["auto", "disjoint_lp", "ftpl"]},
        "adversary": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["iid", "replay", "threshold", "shift",
                                  "worstcase-events", "honest"]},
                "params": {"type": "object"},
            },
        },
        "out_dir": {"type": "string"},
        "workers": {"type": "integer", "minimum": 1},
        "wall_clock_budget": {"type": "number", "exclusiveMinimum": 0},
        "ftpl_inner_cap": {"type": "integer", "minimum": 1},
        "scenario_params": {"type": "object"},
    },
}


@dataclass
class ExperimentConfig:
    scenario: str
    t_rounds: int
    seeds: list
    t_max: int = 10 ** 8
    solver: str = "auto"
    adversary: dict = field(default_factory=lambda: {"kind": "iid"})
    out_dir: str = "runs/latest"
    workers: int = 1
    wall_clock_budget: float = None
    ftpl_inner_cap: int = 20000
    scenario_params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw):
        try:
            jsonschema.validate(raw, SCHEMA)
        except jsonschema.ValidationError as err:
            path = "/".join(str(p) for p in err.absolute_path) or "<root>"
            raise ValueError(f"config invalid at {path}: {err.message}") \
                from err
        return cls(**raw)

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as err:
                raise ValueError(f"{path}: line {err.lineno}, column "
                                 f"{err.colno}: {err.msg}") from err
        return cls.from_dict(raw)

    def to_dict(self):
        d = {k: v for k, v in self.__dict__.items() if v is not None}
        return d

    def canonical_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def config_hash(self):
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]
