"""Shared fixtures: long simulations are run once per session."""

from __future__ import annotations

import pytest

from icb_response.integrator import Trajectory, simulate
from icb_response.metrics import MetricsConfig
from icb_response.models import baseline_params


@pytest.fixture(scope="session")
def baseline_run() -> Trajectory:
    """The baseline delayed response over 400 days."""
    return simulate(baseline_params(), 400.0)


@pytest.fixture(scope="session")
def long_metrics() -> MetricsConfig:
    """Metric settings for 400-day acceptance runs."""
    return MetricsConfig(horizon=400.0)
