"""Experiment configuration files: nested YAML, one experiment per file.

The raw nested dicts are kept verbatim on the config object so that
load -> dump -> load is an exact round trip (diffable, versionable runs).
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np
import yaml

from .convex import Ball, Box, GeneratorCone, Polytope, TargetSet, lift
from .envs import generate
from .mdp import VectorMDP, load_mdp
from .oracles import OracleConfig

ALGORITHMS = ("cone_distance", "cone_feasibility", "general",
              "maximize_reward", "solve_game")


class ConfigError(ValueError):
    """Anything wrong with an experiment description."""


@dataclass
class ExperimentConfig:
    algorithm: str
    seed: int = 0
    rounds: int = 2000
    eta: float | None = None
    output: str | None = None
    threads: int = 1
    mdp: dict | None = None
    target: dict | None = None
    oracle: dict = field(default_factory=dict)
    general: dict = field(default_factory=dict)
    reward_search: dict = field(default_factory=dict)
    game: dict | None = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; "
                              f"expected one of {ALGORITHMS}")
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if self.algorithm == "solve_game":
            if self.game is None:
                raise ConfigError("solve_game needs a 'game' block")
        else:
            if self.mdp is None:
                raise ConfigError(f"{self.algorithm} needs an 'mdp' block")
            sources = [k for k in ("file", "generator", "inline") if k in self.mdp]
            if len(sources) != 1:
                raise ConfigError("mdp block needs exactly one of file/generator/inline")
            if self.target is None:
                raise ConfigError(f"{self.algorithm} needs a 'target' block")
        if self.algorithm == "maximize_reward":
            missing = [k for k in ("coord", "lo", "hi") if k not in self.reward_search]
            if missing:
                raise ConfigError(f"reward_search block missing keys: {missing}")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config root must be a mapping")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "algorithm" not in data:
            raise ConfigError("config needs an 'algorithm' key")
        return cls(**data)

    def to_dict(self) -> dict:
        out = {"algorithm": self.algorithm, "seed": self.seed, "rounds": self.rounds,
               "threads": self.threads}
        if self.eta is not None:
            out["eta"] = self.eta
        if self.output is not None:
            out["output"] = self.output
        for key in ("mdp", "target", "game"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        for key in ("oracle", "general", "reward_search"):
            val = getattr(self, key)
            if val:
                out[key] = val
        return out


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    return ExperimentConfig.from_dict(data)


def dump_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=True)


def build_oracle(cfg: ExperimentConfig) -> OracleConfig:
    try:
        return OracleConfig(**cfg.oracle)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad oracle block: {exc}") from exc


def build_mdp(cfg: ExperimentConfig) -> tuple[VectorMDP, dict]:
    """Materialize the MDP; returns (mdp, env info with presets when generated)."""
    spec = cfg.mdp
    try:
        if "file" in spec:
            return load_mdp(spec["file"]), {}
        if "generator" in spec:
            params = dict(spec["generator"])
            name = params.pop("name", None)
            if name is None:
                raise ConfigError("generator block needs a 'name'")
            seed = params.pop("seed", cfg.seed)
            mdp, info = generate(name, seed=seed, **params)
            return mdp, info
        inline = dict(spec["inline"])
        return VectorMDP(
            np.asarray(inline["initial_dist"], dtype=float),
            np.asarray(inline["transition"], dtype=float),
            np.asarray(inline["measurement_mean"], dtype=float),
            float(inline["gamma"]), float(inline["bound"]),
        ), {}
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, OSError) as exc:
        raise ConfigError(f"bad mdp block: {exc}") from exc


def target_from_spec(spec: dict, env_info: dict | None = None) -> TargetSet:
    """Materialize a target set from its spec dict.

    Kinds: box {lower, upper}, ball {center, radius},
    polytope {normals, offsets}, cone {generators},
    lifted {base, delta, kappa?}, or {preset: name} resolved against a
    generated environment's presets.
    """
    if not isinstance(spec, dict):
        raise ConfigError("target spec must be a mapping")
    if "preset" in spec:
        presets = (env_info or {}).get("presets", {})
        name = spec["preset"]
        if name not in presets:
            raise ConfigError(f"no preset {name!r} available (have {sorted(presets)})")
        return target_from_spec(presets[name])
    kind = spec.get("kind")
    try:
        if kind == "box":
            return Box(np.asarray(spec["lower"], dtype=float),
                       np.asarray(spec["upper"], dtype=float))
        if kind == "ball":
            return Ball(np.asarray(spec["center"], dtype=float), float(spec["radius"]))
        if kind == "polytope":
            return Polytope(np.asarray(spec["normals"], dtype=float),
                            np.asarray(spec["offsets"], dtype=float))
        if kind == "cone":
            return GeneratorCone(np.asarray(spec["generators"], dtype=float))
        if kind == "lifted":
            base = target_from_spec(spec["base"])
            return lift(base, float(spec["delta"]), kappa=spec.get("kappa"))
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad target spec: {exc}") from exc
    raise ConfigError(f"unknown target kind {kind!r}")
