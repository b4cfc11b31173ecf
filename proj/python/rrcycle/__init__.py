"""Python bindings for the rrcycle review-and-refine toolkit."""

import json

from . import _core
from ._core import (
    Policy,
    RrcycleError,
    aggregate,
    aspect_bin,
    calibrate_scores,
    chronological_split,
    combined_loss_and_grad,
    curvature,
    decision_metrics,
    emit_plot_data,
    normalize_title,
    proxy_report,
    segment_sections,
    select_pair,
    simpo_loss,
    simpo_reward,
    strip_latex_comments,
)

__version__ = getattr(_core, "__version__", "0.0.0")


def default_config():
    return json.loads(_core.default_config_json())


def normalize_config(config):
    """Fill defaults, derive module seeds and validate a config dict."""
    return json.loads(_core.normalize_config_json(json.dumps(config)))


def run_cycle(config=None, write_files=False, resume=False):
    """SFT followed by the configured preference rounds.

    Returns a dict with per-stage mean panel scores, accept rates and the
    final Policy. With write_files the run's artifacts go to output_dir.
    """
    return _core.run_cycle(json.dumps(config or {}), write_files, resume)


def best_of_n_sweep(policy, ns, trials=100, seed=0, config=None):
    return _core.best_of_n_sweep(json.dumps(config or {}), policy, list(ns), trials, seed)


__all__ = [
    "Policy",
    "RrcycleError",
    "aggregate",
    "aspect_bin",
    "best_of_n_sweep",
    "calibrate_scores",
    "chronological_split",
    "combined_loss_and_grad",
    "curvature",
    "decision_metrics",
    "default_config",
    "emit_plot_data",
    "normalize_config",
    "normalize_title",
    "proxy_report",
    "run_cycle",
    "segment_sections",
    "select_pair",
    "simpo_loss",
    "simpo_reward",
    "strip_latex_comments",
]
