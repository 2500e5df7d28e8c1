"""Experiment configuration read from TOML or JSON."""
from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .initializer import RidgeConfig
from .sem import GenerationConfig
from .tracker import TrackerConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SECTIONS = ("generation", "ridge", "tracker", "clustering", "sweep", "preprocess", "evaluation", "output_dir", "rng_seed")


@dataclass
class ClusteringConfig:
    n_states: int = 4
    t_cluster: int = 200
    n_init: int = 10

    def __post_init__(self):
        if self.n_states < 1 or self.t_cluster < 1 or self.n_init < 1:
            raise ConfigError("clustering values must be >= 1")


@dataclass
class SweepConfig:
    parameter: str = "S"
    values: list = field(default_factory=lambda: list(range(1, 11)))

    def __post_init__(self):
        if self.parameter not in ("S", "lambda"):
            raise ConfigError("sweep parameter must be 'S' or 'lambda'")
        if not self.values:
            raise ConfigError("sweep needs at least one value")


@dataclass
class ExperimentConfig:
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    ridge: RidgeConfig = field(default_factory=RidgeConfig)
    tracker: dict = field(default_factory=dict)       # raw; resolved against the run mode
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    preprocess: dict = field(default_factory=dict)
    evaluation: dict = field(default_factory=dict)
    output_dir: str | None = None
    rng_seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        seed = int(d.get("rng_seed", 0))
        gen = dict(d.get("generation", {}))
        gen.setdefault("rng_seed", seed)
        try:
            TrackerConfig.from_dict(d.get("tracker", {}))
            return cls(
                generation=GenerationConfig.from_dict(gen),
                ridge=RidgeConfig(**d.get("ridge", {})),
                tracker=dict(d.get("tracker", {})),
                clustering=ClusteringConfig(**d.get("clustering", {})),
                sweep=SweepConfig(**d.get("sweep", {})),
                preprocess=dict(d.get("preprocess", {})),
                evaluation=dict(d.get("evaluation", {})),
                output_dir=d.get("output_dir"),
                rng_seed=seed,
            )
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def with_seed(self, seed: int) -> "ExperimentConfig":
        d = self.to_dict()
        d["rng_seed"] = int(seed)
        d["generation"]["rng_seed"] = int(seed)
        return ExperimentConfig.from_dict(d)

    def tracker_config(self, mode: str = "stream", criterion: str | None = None) -> TrackerConfig:
        """Mode defaults, then the config file, then the criterion flag."""
        if mode not in ("stream", "offline"):
            raise ConfigError("mode must be 'stream' or 'offline'")
        base = {"max_inner_iters": 5, "state_criterion": "apriori", "step_rule": "backtracking"}
        if mode == "offline":
            base = {"max_inner_iters": 100, "tol_inner": 1e-6, "state_criterion": "aposteriori",
                    "step_rule": "backtracking"}
        base.update(self.tracker)
        if mode == "offline":
            base["state_criterion"] = "aposteriori"
        if criterion is not None:
            base["state_criterion"] = criterion
        return TrackerConfig.from_dict(base)

    def to_dict(self) -> dict:
        return {
            "generation": self.generation.to_dict(),
            "ridge": self.ridge.to_dict(),
            "tracker": dict(self.tracker),
            "clustering": dict(n_states=self.clustering.n_states, t_cluster=self.clustering.t_cluster,
                               n_init=self.clustering.n_init),
            "sweep": dict(parameter=self.sweep.parameter, values=list(self.sweep.values)),
            "preprocess": dict(self.preprocess),
            "evaluation": dict(self.evaluation),
            "output_dir": self.output_dir,
            "rng_seed": self.rng_seed,
        }


def read_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        if path.suffix.lower() == ".toml":
            with open(path, "rb") as fh:
                return tomllib.load(fh)
        with open(path) as fh:
            return json.load(fh)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def load_config(path=None) -> ExperimentConfig:
    return ExperimentConfig() if path is None else ExperimentConfig.from_dict(read_config_file(path))
