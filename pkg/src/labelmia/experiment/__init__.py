"""Declarative experiments and the command-line interface."""

from labelmia.experiment.config import ExperimentConfig, load_config, parse_config
from labelmia.experiment.runner import (RunReport, defense_combinations, run_defense_grid,
                                        run_experiment, run_relaxation_matrix, stage_seed)

__all__ = ["ExperimentConfig", "RunReport", "defense_combinations", "load_config", "parse_config",
           "run_defense_grid", "run_experiment", "run_relaxation_matrix", "stage_seed"]
