"""Game files, experiment configs, runs with manifests, and the acceptance suite."""

from .config import ConfigError, ExperimentConfig, load_config
from .experiments import RunManifest, replay, run_experiment
from .gamefile import GameFileError, LoadedGame, builtin_names, load_game
from .suite import Verdict, builtin_suite
