"""Experiment harness: configuration, seeded sweeps, CSV output and SVG plots."""
from .config import ConfigError, ExperimentConfig, build_config, parse_config
from .plots import PLOT_KINDS, PlotError, emit_plot
from .runner import RunRecord, run_learning
from .sweep import RunResult, SweepSpec, list_presets, load_preset, make_agent, run_sweep

__all__ = ["ConfigError", "ExperimentConfig", "build_config", "parse_config", "PLOT_KINDS", "PlotError",
           "emit_plot", "RunRecord", "run_learning", "RunResult", "SweepSpec", "list_presets", "load_preset",
           "make_agent", "run_sweep"]
