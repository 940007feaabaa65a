"""Python access to the tsfn core: fusion primitives and the experiment harness."""

import json

from ._core import (
    ConfigError,
    DataError,
    DomainError,
    Error,
    NumericalError,
    ShapeError,
    baseline_fuse,
    config_defaults,
    dft_naive,
    fft,
    fuse_streams,
    generate_dataset,
    interval_encode,
    rank1_approx,
    set_progress,
    tscf_fuse,
)
from . import _core


def run_experiment(config):
    """Trains both phases and evaluates; returns the report as a dict."""
    return json.loads(_core.run_experiment(config))


def evaluate_saved(config):
    return json.loads(_core.evaluate_saved(config))


def ablate(config, streams):
    return json.loads(_core.ablate(config, streams))


def read_report(path):
    return json.loads(_core.read_report(str(path)))


__all__ = [
    "ConfigError", "DataError", "DomainError", "Error", "NumericalError", "ShapeError",
    "ablate", "baseline_fuse", "config_defaults", "dft_naive", "evaluate_saved", "fft",
    "fuse_streams", "generate_dataset", "interval_encode", "rank1_approx", "read_report",
    "run_experiment", "set_progress", "tscf_fuse",
]
