"""Configuration, Monte-Carlo orchestration, file formats and the CLI."""
from .config import PRESETS, ExperimentConfig, load_config, parse_config
from .pipeline import RunReport, replay_frames, run_analytic, run_resolve, run_simulation

__all__ = [
    "PRESETS",
    "ExperimentConfig",
    "RunReport",
    "load_config",
    "parse_config",
    "replay_frames",
    "run_analytic",
    "run_resolve",
    "run_simulation",
]
