"""Configuration, runs, sweeps, named experiments and the command line."""
from metapop.harness.config import OUTPUT_ROOT_ENV, ConfigError, ExperimentConfig, parse_seeds
from metapop.harness.experiments import EXPERIMENTS, export_figure, reproduce_experiment
from metapop.harness.runner import (
    MissingArtifactError,
    RunManifest,
    evaluate_run,
    load_mains,
    run_seed,
    sweep,
    train_experiment,
)

__all__ = [
    "ConfigError",
    "EXPERIMENTS",
    "ExperimentConfig",
    "MissingArtifactError",
    "OUTPUT_ROOT_ENV",
    "RunManifest",
    "evaluate_run",
    "export_figure",
    "load_mains",
    "parse_seeds",
    "reproduce_experiment",
    "run_seed",
    "sweep",
    "train_experiment",
]
