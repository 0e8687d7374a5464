"""Simulated tactile edge following for a legged robot with a TacTip foot."""

from .controller import ControllerConfig, SearchConfig, Simulation, control_step, initialize, run, search_edge
from .experiment import (
    ExperimentConfig,
    compute_metrics,
    default_config,
    emit_plot_data,
    load_config,
    run_experiment,
    run_metrics,
    run_seed,
)
from .geometry import ArcSpec, Pose2D, RobotParams
from .sensor import PinLayout, SensorParams, TapFrame, simulate_tap
from .terrain import BeamTerrain, TableTerrain, is_supported, signed_edge_distance

__version__ = "0.1.0"

__all__ = [
    "ArcSpec",
    "BeamTerrain",
    "ControllerConfig",
    "ExperimentConfig",
    "PinLayout",
    "Pose2D",
    "RobotParams",
    "SearchConfig",
    "SensorParams",
    "Simulation",
    "TableTerrain",
    "TapFrame",
    "compute_metrics",
    "control_step",
    "default_config",
    "emit_plot_data",
    "initialize",
    "is_supported",
    "load_config",
    "run",
    "run_experiment",
    "run_metrics",
    "run_seed",
    "search_edge",
    "signed_edge_distance",
    "simulate_tap",
]
