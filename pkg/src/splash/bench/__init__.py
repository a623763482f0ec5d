"""Experiment harness: baselines, toy comparison, rate lab and task runs."""

from .baselines import baseline_combiner
from .config import ExperimentConfig, config_from_dict, load_config
from .rate import RateLab, rate_experiment
from .report import ExperimentResult
from .tasks import run_task
from .toy import toy_experiment, toy_run

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "RateLab",
    "baseline_combiner",
    "config_from_dict",
    "load_config",
    "rate_experiment",
    "run_task",
    "toy_experiment",
    "toy_run",
]
