"""Clinical quantities and response classification for simulated runs."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from icb_response.integrator import (
    IntegratorConfig,
    Trajectory,
    crossing_time,
    crossing_times,
    simulate,
)
from icb_response.models import ModelParams

logger = logging.getLogger(__name__)


class ResponseClass(str, Enum):
    """The four qualitative responses to checkpoint blockade."""

    NO_RESPONSE = "NoResponse"
    QUICK_FULL = "QuickFull"
    QUICK_PARTIAL = "QuickPartial"
    DELAYED = "Delayed"


@dataclass(frozen=True)
class MetricsConfig:
    """Thresholds defining response onset, eradication and steadiness.

    All fractions of ``C_star`` use the trajectory's parameters; a
    trajectory without parameters uses its initial cancer level instead.
    """

    response_frac: float = 0.5
    quick_cutoff: float = 30.0
    eradication_frac: float = 0.01
    partial_band: tuple[float, float] = (0.05, 0.95)
    steadiness_window: float = 100.0
    steadiness_rel_var: float = 0.01
    horizon: float = 3650.0

    def __post_init__(self) -> None:
        lo, hi = self.partial_band
        object.__setattr__(self, "partial_band", (float(lo), float(hi)))
        if not 0 < self.eradication_frac < lo < hi < 1:
            raise ValueError(
                "thresholds must satisfy 0 < eradication_frac < partial_band "
                f"lo < hi < 1, got eradication_frac={self.eradication_frac!r}, "
                f"partial_band={self.partial_band!r}"
            )
        if not 0 < self.response_frac < 1:
            raise ValueError(
                f"response_frac must lie in (0, 1), got {self.response_frac!r}"
            )
        if not self.quick_cutoff < self.horizon:
            raise ValueError(
                f"quick_cutoff ({self.quick_cutoff!r}) must be below "
                f"horizon ({self.horizon!r})"
            )
        if self.steadiness_window <= 0 or self.steadiness_rel_var <= 0:
            raise ValueError("steadiness_window and steadiness_rel_var must be > 0")


@dataclass(frozen=True)
class ResponseReport:
    """Response class plus the clinical quantities that apply to it."""

    response_class: ResponseClass
    delay_length: float | None = None
    dormancy_length: float | None = None
    post_treatment_size: float | None = None
    cycle_period: float | None = None
    effector_window: float | None = None

    def to_dict(self) -> dict:
        """Convert the report to a plain dictionary."""
        return {
            "class": self.response_class.value,
            "delay_length": self.delay_length,
            "dormancy_length": self.dormancy_length,
            "post_treatment_size": self.post_treatment_size,
            "cycle_period": self.cycle_period,
            "effector_window": self.effector_window,
        }


def _tumour_scale(traj: Trajectory) -> float:
    if traj.params is not None:
        return traj.params.C_star
    return float(traj.states[0, 0])


def _cancer_crossings(
    traj: Trajectory, level: float, direction: str, after: float | None = None
) -> list[float]:
    return crossing_times(
        traj.times,
        traj.component("C"),
        level,
        direction,
        after=after,
        slopes=traj.component_derivative("C"),
    )


def _within_horizon(traj: Trajectory, cfg: MetricsConfig, t: float | None) -> bool:
    return t is not None and t - traj.t0 <= cfg.horizon


def delay_length(traj: Trajectory, cfg: MetricsConfig) -> float | None:
    """Return the time until C first falls through response_frac * C(0).

    Returns None when the tumour does not respond within the horizon.
    """
    level = cfg.response_frac * float(traj.states[0, 0])
    t = crossing_time(
        traj.times,
        traj.component("C"),
        level,
        "downward",
        slopes=traj.component_derivative("C"),
    )
    if not _within_horizon(traj, cfg, t):
        return None
    return t - traj.t0


def dormancy_length(traj: Trajectory, cfg: MetricsConfig) -> float | None:
    """Return how long the tumour stays suppressed before relapsing.

    Dormancy starts when C first falls below eradication_frac * C_star and
    ends at the next upward crossing of response_frac * C_star.
    """
    scale = _tumour_scale(traj)
    suppressed = _cancer_crossings(traj, cfg.eradication_frac * scale, "downward")
    if not suppressed or not _within_horizon(traj, cfg, suppressed[0]):
        return None
    start = suppressed[0]
    relapse = _cancer_crossings(
        traj, cfg.response_frac * scale, "upward", after=start
    )
    if not relapse or not _within_horizon(traj, cfg, relapse[0]):
        return None
    return relapse[0] - start


def relapse_times(traj: Trajectory, cfg: MetricsConfig) -> list[float]:
    """Return every upward crossing of response_frac * C_star."""
    scale = _tumour_scale(traj)
    return [
        t
        for t in _cancer_crossings(traj, cfg.response_frac * scale, "upward")
        if _within_horizon(traj, cfg, t)
    ]


def cycle_periods(traj: Trajectory, cfg: MetricsConfig) -> list[float]:
    """Return the spacings between successive responses (downward crossings)."""
    scale = _tumour_scale(traj)
    responses = [
        t
        for t in _cancer_crossings(traj, cfg.response_frac * scale, "downward")
        if _within_horizon(traj, cfg, t)
    ]
    return [b - a for a, b in zip(responses, responses[1:])]


def cycle_period(traj: Trajectory, cfg: MetricsConfig) -> float | None:
    """Return the mean spacing between responses, or None with fewer than two."""
    periods = cycle_periods(traj, cfg)
    if not periods:
        return None
    return float(np.mean(periods))


def post_treatment_size(traj: Trajectory, cfg: MetricsConfig) -> float | None:
    """Return the stabilised tumour size of a partial response.

    The mean of C over the final steadiness window counts only when its
    relative variation stays below ``steadiness_rel_var`` and the mean lies
    inside the partial band.
    """
    window = traj.times >= traj.t_end - cfg.steadiness_window
    C = traj.component("C")[window]
    mean = float(np.mean(C))
    if mean <= 0:
        return None
    variation = float(np.max(C) - np.min(C)) / mean
    if variation >= cfg.steadiness_rel_var:
        return None
    scale = _tumour_scale(traj)
    lo, hi = cfg.partial_band
    if not lo * scale < mean < hi * scale:
        return None
    return mean


def effector_window(traj: Trajectory, cfg: MetricsConfig) -> float | None:
    """Return the duration of the first interval on which E exceeds S.

    An interval still open at the end of the trajectory is measured up to
    its last sample.
    """
    gap = traj.component("E") - traj.component("S")
    slopes = None
    if traj.derivatives is not None:
        slopes = traj.component_derivative("E") - traj.component_derivative("S")

    if gap[0] > 0:
        start = traj.t0
    else:
        start = crossing_time(traj.times, gap, 0.0, "upward", slopes=slopes)
        if start is None:
            return None
    end = crossing_time(traj.times, gap, 0.0, "downward", after=start, slopes=slopes)
    if end is None:
        end = traj.t_end
    return end - start


def classify(traj: Trajectory, cfg: MetricsConfig) -> ResponseReport:
    """Classify a run and collect the clinical quantities that apply.

    NoResponse when there is no delay; Delayed when the delay exceeds the
    quick cutoff; otherwise QuickPartial when the tumour settles inside the
    partial band and QuickFull when it does not.
    """
    delay = delay_length(traj, cfg)
    window = effector_window(traj, cfg)
    if delay is None:
        report = ResponseReport(ResponseClass.NO_RESPONSE, effector_window=window)
    elif delay > cfg.quick_cutoff:
        report = ResponseReport(
            ResponseClass.DELAYED,
            delay_length=delay,
            dormancy_length=dormancy_length(traj, cfg),
            cycle_period=cycle_period(traj, cfg),
            effector_window=window,
        )
    else:
        size = post_treatment_size(traj, cfg)
        if size is not None:
            report = ResponseReport(
                ResponseClass.QUICK_PARTIAL,
                delay_length=delay,
                post_treatment_size=size,
                effector_window=window,
            )
        else:
            report = ResponseReport(
                ResponseClass.QUICK_FULL,
                delay_length=delay,
                dormancy_length=dormancy_length(traj, cfg),
                cycle_period=cycle_period(traj, cfg),
                effector_window=window,
            )
    logger.debug(
        "Classified run as %s (delay=%s)", report.response_class.value, delay
    )
    return report


def evaluate_params(
    params: ModelParams,
    cfg: MetricsConfig,
    integrator_config: IntegratorConfig | None = None,
    signal_seed: float = 1.0,
) -> ResponseReport:
    """Simulate from the tumour-escape state over the horizon and classify.

    Raises:
        IntegrationError: If the integration does not reach the horizon.
    """
    traj = simulate(params, cfg.horizon, integrator_config, signal_seed)
    traj.raise_for_status()
    return classify(traj, cfg)
