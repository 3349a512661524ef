"""Cooperative multi-agent Q-learning with monotonic value mixing.

The package bundles a small float64 autodiff core, two built-in
partially observable team tasks, the IQL/VDN/QMIX family of joint-value
heads, an episode-replay learner and an experiment harness with a CLI and
an HTTP service front end.
"""
from .config import ALGORITHMS, ENV_NAMES, ExperimentConfig, build_config, load_config
from .runner import (
    EvalReport,
    RunResult,
    dump_qtot_table,
    emit_metrics_csv,
    evaluate_heuristic,
    evaluate_policy,
    run_experiment,
    run_sweep,
    summarize_sweep,
)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "ENV_NAMES",
    "ExperimentConfig",
    "build_config",
    "load_config",
    "EvalReport",
    "RunResult",
    "run_experiment",
    "run_sweep",
    "summarize_sweep",
    "evaluate_policy",
    "evaluate_heuristic",
    "dump_qtot_table",
    "emit_metrics_csv",
    "__version__",
]
