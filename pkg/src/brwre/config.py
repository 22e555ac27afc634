"""Experiment configuration: schema, validation, presets."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Any

import jsonschema

from .env import DisorderSpec
from .lattice import Direction


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def load_schema(name: str) -> dict:
    return json.loads(resources.files("brwre.schemas").joinpath(f"{name}.schema.json").read_text())


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass
class ExperimentConfig:
    disorder: DisorderSpec
    d: int = 1
    theta: str | None = None
    horizons: list[int] = field(default_factory=lambda: [64])
    replicas_env: int = 200
    replicas_pop: int = 1
    cap: int = 10**6
    seed: int = 0
    out: str = "out"
    workers: int = 1
    options: dict = field(default_factory=dict)

    @property
    def direction(self) -> Direction | None:
        if self.theta is None:
            return None
        return Direction.parse(self.theta)

    @property
    def horizon(self) -> int:
        return int(self.horizons[0])

    def to_dict(self) -> dict:
        dis = self.disorder.to_dict()
        dis.pop("master_seed")
        return {"disorder": dis, "d": self.d, "theta": self.theta,
                "horizons": list(self.horizons), "replicas_env": self.replicas_env,
                "replicas_pop": self.replicas_pop, "cap": self.cap, "seed": self.seed,
                "out": self.out, "workers": self.workers, "options": copy.deepcopy(self.options)}

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        validate_config(raw)
        seed = int(raw.get("seed", 0))
        dis = dict(raw["disorder"])
        dis["master_seed"] = seed
        try:
            spec = DisorderSpec.from_dict(dis)
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError("disorder", str(exc)) from None
        cfg = cls(disorder=spec, d=int(raw.get("d", 1)), theta=raw.get("theta"),
                  horizons=[int(h) for h in raw.get("horizons", [64])],
                  replicas_env=int(raw.get("replicas_env", 200)),
                  replicas_pop=int(raw.get("replicas_pop", 1)),
                  cap=int(raw.get("cap", 10**6)), seed=seed, out=str(raw.get("out", "out")),
                  workers=int(raw.get("workers", 1)), options=dict(raw.get("options", {})))
        if cfg.theta is not None:
            try:
                th = Direction.parse(cfg.theta)
            except ValueError as exc:
                raise ConfigError("theta", str(exc)) from None
            if th.d != cfg.d:
                raise ConfigError("theta", f"has dimension {th.d} but d = {cfg.d}")
        return cfg

    def with_overrides(self, **kw) -> "ExperimentConfig":
        raw = self.to_dict()
        raw.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentConfig.from_dict(raw)

    def hash(self) -> str:
        return hashlib.sha256(canonical_json(self.to_dict()).encode()).hexdigest()


def validate_config(raw: dict) -> None:
    schema = load_schema("config")
    errors = sorted(jsonschema.Draft202012Validator(schema).iter_errors(raw),
                    key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        path = ".".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(path, e.message)


def load_config(path: str) -> ExperimentConfig:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"not valid JSON: {exc}") from None
    return ExperimentConfig.from_dict(raw)


# --- presets -------------------------------------------------------------------

_GW_LAW = {"0": 0.25, "2": 0.75}
_TWO_ATOM = {"family": "mixture",
             "params": {"laws": [{"0": 0.5, "2": 0.5}, {"0": 0.25, "2": 0.75}],
                        "weights": [0.5, 0.5]},
             "k_max": 64}

PRESETS: dict[str, dict] = {
    "gw-constant": {
        "description": "Constant law {0:1/4, 2:3/4}: every quantity reduces to a Galton-Watson "
                       "process (survival 2/3, free energy ln 1.5).",
        "config": {"disorder": {"family": "deterministic", "params": {"law": _GW_LAW}},
                   "d": 1, "horizons": [200], "replicas_env": 1, "replicas_pop": 4000,
                   "cap": 10**6, "seed": 1},
    },
    "thm-NT-growth": {
        "description": "Global growth: the growth rate of |B_t| on survival matches the polymer "
                       "free energy estimated on the same disorder law.",
        "config": {"disorder": _TWO_ATOM, "d": 1, "horizons": [64], "replicas_env": 200,
                   "replicas_pop": 1, "cap": 10**6, "seed": 11,
                   "options": {"t_min": 10}},
    },
    "thm-NTloc-direction": {
        "description": "Local growth along a rational direction: directional free energy and "
                       "local survival along the ray t*theta.",
        "config": {"disorder": _TWO_ATOM, "d": 1, "theta": "0", "horizons": [64],
                   "replicas_env": 100, "replicas_pop": 20, "cap": 10**6, "seed": 12},
    },
    "sandwich": {
        "description": "Survival probability between the Smith-Wilkinson and Galton-Watson "
                       "comparison bounds for the two-atom mixture (sigma_GW = 2/5).",
        "config": {"disorder": _TWO_ATOM, "d": 1, "horizons": [200], "replicas_env": 200,
                   "replicas_pop": 20, "cap": 10**6, "seed": 13,
                   "options": {"sw_t_max": 400, "sw_replicas": 4000}},
    },
    "concentration-decay": {
        "description": "Concentration of ln Z_t about its mean: tails over a horizon ladder "
                       "against the martingale concentration bound.",
        "config": {"disorder": _TWO_ATOM, "d": 1, "horizons": [8, 16, 32, 64],
                   "replicas_env": 2000, "seed": 14, "options": {"epsilons": [0.02, 0.04]}},
    },
    "weak-disorder-martingale": {
        "description": "d = 3 with small Q[m^2]/m^2: the normalised population W_t has mean 1 and "
                       "|B_t|/Z_t stabilises on survival.",
        "config": {"disorder": {"family": "mixture",
                                "params": {"laws": [{"0": 0.2, "2": 0.8}, {"0": 0.15, "2": 0.85}],
                                           "weights": [0.5, 0.5]}},
                   "d": 3, "horizons": [15], "replicas_env": 2000, "replicas_pop": 1,
                   "cap": 10**6, "seed": 15},
    },
    "critical-explore": {
        "description": "Exploratory only: a disorder law tuned so that the free energy is close "
                       "to 0. No acceptance check depends on it.",
        "config": {"disorder": {"family": "mixture",
                                "params": {"laws": [{"0": 0.5, "2": 0.5}, {"0": 0.45, "2": 0.55}],
                                           "weights": [0.5, 0.5]}},
                   "d": 1, "horizons": [200], "replicas_env": 50, "replicas_pop": 20,
                   "cap": 10**6, "seed": 16},
    },
}


def preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r}; known: {sorted(PRESETS)}")
    return ExperimentConfig.from_dict(copy.deepcopy(PRESETS[name]["config"]))
