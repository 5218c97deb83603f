"""Reproduction of the simulation studies."""

from condweight.harness.config import ExperimentConfig, config_from_dict, load_config
from condweight.harness.experiments import (
    ExperimentReport,
    run_experiment,
    run_outlier,
    run_poststrat_cps,
    run_poststrat_srs,
    run_strata_jumper,
)
from condweight.harness.report import emit_report

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "config_from_dict",
    "emit_report",
    "load_config",
    "run_experiment",
    "run_outlier",
    "run_poststrat_cps",
    "run_poststrat_srs",
    "run_strata_jumper",
]
