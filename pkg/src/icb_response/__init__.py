"""Simulation toolkit for delayed responses to immune checkpoint blockade."""

__version__ = "0.1.0"

from icb_response.calibration import FitSpec, fit_delay, resolve_rc
from icb_response.dosing import DoseSchedule, journey_case, simulate_with_doses
from icb_response.experiments import find_threshold, oat_sensitivity, region_map
from icb_response.export import emit_csv, write_csv, write_report
from icb_response.integrator import IntegratorConfig, Trajectory, integrate, simulate
from icb_response.metrics import MetricsConfig, ResponseClass, classify
from icb_response.models import ModelParams, StateVector, baseline_params

__all__ = [
    "DoseSchedule",
    "FitSpec",
    "IntegratorConfig",
    "MetricsConfig",
    "ModelParams",
    "ResponseClass",
    "StateVector",
    "Trajectory",
    "baseline_params",
    "classify",
    "emit_csv",
    "find_threshold",
    "fit_delay",
    "integrate",
    "journey_case",
    "oat_sensitivity",
    "region_map",
    "resolve_rc",
    "simulate",
    "simulate_with_doses",
    "write_csv",
    "write_report",
]
