"""Experiment configuration files.

    experiment: hit-time          # one of KINDS
    game: builtin:lb2             # game file path (relative to this file) or builtin
    seeds: [0]
    out: results/hit
    dynamics: {b: 0.01, alpha: 1.0, p: [0.5, 0.5]}
    params: {Q0: [[1, 0], [1, 0]], trials: 1000}
    sweep: {eps: [0.4, 0.2, 0.1]}
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .gamefile import BUILTIN_PREFIX, GameFileError

KINDS = ("simulate", "ode", "classify", "nash", "verify-potential", "drift-check",
         "hit-time", "escape-prob", "ode-dev")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    game: str
    seeds: list[int] = field(default_factory=lambda: [0])
    out: str = "results"
    dynamics: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)

    def validate(self) -> "ExperimentConfig":
        if self.experiment not in KINDS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {KINDS}")
        if not self.game:
            raise ConfigError("a game reference is required")
        if not self.game.startswith(BUILTIN_PREFIX) and not Path(self.game).is_file():
            raise GameFileError(f"game file {self.game} not found")
        if not self.seeds or not all(isinstance(s, int) and s >= 0 for s in self.seeds):
            raise ConfigError("seeds must be a non-empty list of nonnegative integers")
        for key, values in self.sweep.items():
            if not isinstance(values, list) or not values:
                raise ConfigError(f"sweep {key!r} must be a non-empty list")
        return self

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "game": self.game, "seeds": list(self.seeds),
                "out": self.out, "dynamics": copy.deepcopy(self.dynamics),
                "params": copy.deepcopy(self.params), "sweep": copy.deepcopy(self.sweep)}

    @classmethod
    def from_dict(cls, data: dict, base: Path | None = None) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a mapping")
        unknown = set(data) - {"experiment", "game", "seeds", "out", "dynamics", "params", "sweep"}
        if unknown:
            raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
        if "experiment" not in data or "game" not in data:
            raise ConfigError("configuration needs 'experiment' and 'game'")
        game = str(data["game"])
        if base is not None and not game.startswith(BUILTIN_PREFIX) and not Path(game).is_absolute():
            game = str(base / game)
        seeds = data.get("seeds", [0])
        if isinstance(seeds, int):
            seeds = [seeds]
        for key in ("dynamics", "params", "sweep"):
            if not isinstance(data.get(key, {}), dict):
                raise ConfigError(f"{key!r} must be a mapping")
        return cls(str(data["experiment"]), game, list(seeds), str(data.get("out", "results")),
                   dict(data.get("dynamics", {})), dict(data.get("params", {})),
                   dict(data.get("sweep", {})))


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return ExperimentConfig.from_dict(data, path.parent.resolve()).validate()
