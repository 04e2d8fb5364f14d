"""Hyperparameter domains and seeded sampling.

A :class:`HyperparamSpace` is an ordered list of :class:`ParamSpec`; a
configuration is a plain ``dict`` mapping parameter name to a float
(integer-valued parameters are stored as exact floats).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np

UNIFORM = "uniform"
LOG_UNIFORM = "log-uniform"
LOG_RANDINT = "log-randint"
DISTRIBUTIONS = (UNIFORM, LOG_UNIFORM, LOG_RANDINT)

Configuration = dict  # name -> float


class SpaceError(ValueError):
    pass


@dataclass(frozen=True)
class ParamSpec:
    name: str
    distribution: str
    lower: float
    upper: float

    def __post_init__(self):
        if self.distribution not in DISTRIBUTIONS:
            raise SpaceError(f"{self.name}: unknown distribution {self.distribution!r}")
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise SpaceError(f"{self.name}: bounds must be finite")
        if not self.lower < self.upper:
            raise SpaceError(f"{self.name}: lower must be < upper")
        if self.is_log and self.lower <= 0:
            raise SpaceError(f"{self.name}: log-scaled bounds must be positive")
        if self.distribution == LOG_RANDINT:
            if self.lower != int(self.lower) or self.upper != int(self.upper) or self.lower < 1:
                raise SpaceError(f"{self.name}: log-randint bounds must be integers >= 1")

    @property
    def is_log(self) -> bool:
        return self.distribution in (LOG_UNIFORM, LOG_RANDINT)

    @property
    def is_integer(self) -> bool:
        return self.distribution == LOG_RANDINT

    def draw(self, rng: np.random.Generator) -> float:
        if self.distribution == UNIFORM:
            return float(rng.uniform(self.lower, self.upper))
        v = math.exp(rng.uniform(math.log(self.lower), math.log(self.upper)))
        if self.distribution == LOG_RANDINT:
            # round-half-up keeps the rule independent of banker's rounding
            v = float(min(max(math.floor(v + 0.5), self.lower), self.upper))
        return float(min(max(v, self.lower), self.upper))

    def contains(self, value) -> bool:
        try:
            v = float(value)
        except (TypeError, ValueError):
            return False
        if not math.isfinite(v) or v < self.lower or v > self.upper:
            return False
        if self.is_integer and v != math.floor(v):
            return False
        return True

    def to_unit(self, value: float) -> float:
        """Map a value onto [0, 1], in log space for log-scaled specs."""
        if self.is_log:
            lo, hi = math.log(self.lower), math.log(self.upper)
            return (math.log(value) - lo) / (hi - lo)
        return (value - self.lower) / (self.upper - self.lower)

    def to_dict(self) -> dict:
        return {"name": self.name, "distribution": self.distribution,
                "lower": self.lower, "upper": self.upper}


@dataclass(frozen=True)
class HyperparamSpace:
    params: tuple[ParamSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise SpaceError("parameter names must be unique")

    def __iter__(self) -> Iterator[ParamSpec]:
        return iter(self.params)

    def __len__(self) -> int:
        return len(self.params)

    def __getitem__(self, name: str) -> ParamSpec:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    def to_unit(self, config: Mapping[str, float]) -> np.ndarray:
        return np.array([p.to_unit(config[p.name]) for p in self.params])

    def to_json(self) -> str:
        return json.dumps([p.to_dict() for p in self.params], indent=2)

    @classmethod
    def from_json(cls, text: str) -> "HyperparamSpace":
        return cls(tuple(ParamSpec(d["name"], d["distribution"], float(d["lower"]),
                                   float(d["upper"])) for d in json.loads(text)))


def default_xgboost_space() -> HyperparamSpace:
    """The eight boosted-tree hyperparameters and their sampling ranges."""
    return HyperparamSpace((
        ParamSpec("eta", LOG_UNIFORM, 1e-3, 1.0),
        ParamSpec("alpha", LOG_UNIFORM, 1e-6, 2.0),
        ParamSpec("lambda", LOG_UNIFORM, 1e-6, 2.0),
        ParamSpec("gamma", LOG_UNIFORM, 1e-6, 64.0),
        ParamSpec("subsample", UNIFORM, 0.5, 1.0),
        ParamSpec("col_subsample", UNIFORM, 0.3, 1.0),
        ParamSpec("max_depth", LOG_RANDINT, 2, 8),
        ParamSpec("num_round", LOG_RANDINT, 2, 1024),
    ))


def sample_config(space: HyperparamSpace, rng_seed: int) -> Configuration:
    """Draw one configuration; a pure function of ``(space, rng_seed)``."""
    rng = np.random.default_rng(rng_seed)
    return {p.name: p.draw(rng) for p in space}


def validate_config(space: HyperparamSpace, config: Mapping[str, float]) -> list[str]:
    """Return the names of violated parameters (empty list means valid).

    Unknown keys in ``config`` are reported too.
    """
    bad = [p.name for p in space if p.name not in config or not p.contains(config[p.name])]
    known = set(space.names)
    bad.extend(k for k in config if k not in known)
    return bad


def config_key(config: Mapping[str, float]) -> str:
    """Canonical string identity of a configuration."""
    return json.dumps({k: float(config[k]) for k in sorted(config)}, sort_keys=True)
