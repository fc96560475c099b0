"""Checkpoint-blockade dosing as timed jumps of the (beta, gamma) parameters.

A dose raises ``beta`` (CTLA-4 blockade) and lowers ``gamma`` (PD-1
blockade) instantly and permanently. The state is never touched, so a
dosed run is a sequence of ordinary integrations restarted from the
state reached at each dose time.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field

import numpy as np

from icb_response.experiments import band_edges
from icb_response.integrator import (
    IntegrationError,
    IntegratorConfig,
    StepStats,
    Trajectory,
    integrate,
    uniform_grid,
)
from icb_response.metrics import MetricsConfig, ResponseClass, ResponseReport, classify
from icb_response.models import ModelParams, StateVector

logger = logging.getLogger(__name__)

CASES: dict[tuple[str, str], str] = {
    ("none", "none"): "a",
    ("none", "delayed"): "b",
    ("none", "quick"): "c",
    ("delayed", "delayed"): "d",
    ("delayed", "quick"): "e",
}


class DoseSegmentError(IntegrationError):
    """Raised when the integration between two doses fails."""

    def __init__(self, segment: int, message: str) -> None:
        super().__init__(f"Segment {segment} failed: {message}")
        self.segment = segment


@dataclass(frozen=True)
class Dose:
    """One administration: at ``time``, beta += delta_beta and gamma -= delta_gamma."""

    time: float
    delta_beta: float = 0.0
    delta_gamma: float = 0.0

    def __post_init__(self) -> None:
        for name in ("time", "delta_beta", "delta_gamma"):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"Dose.{name} must be finite and >= 0, got {value!r}")
            object.__setattr__(self, name, value)

    def apply(self, params: ModelParams) -> ModelParams:
        """Return the parameters after this dose; gamma is floored at zero."""
        return params.replace(
            beta=params.beta + self.delta_beta,
            gamma=max(0.0, params.gamma - self.delta_gamma),
        )

    @classmethod
    def parse(cls, text: str) -> Dose:
        """Parse ``"T:DBETA:DGAMMA"``, e.g. ``"0:0.0000012:0.0028"``.

        Raises:
            ValueError: If the text is not three colon-separated numbers.
        """
        parts = text.strip().split(":")
        if len(parts) != 3:
            raise ValueError(f"Dose '{text}' must have the form T:DBETA:DGAMMA")
        try:
            time, delta_beta, delta_gamma = (float(p) for p in parts)
        except ValueError:
            raise ValueError(f"Dose '{text}' contains a non-numeric field") from None
        return cls(time, delta_beta, delta_gamma)

    def to_dict(self) -> dict:
        return {
            "time": self.time,
            "delta_beta": self.delta_beta,
            "delta_gamma": self.delta_gamma,
        }


@dataclass(frozen=True)
class DoseSchedule:
    """Doses in strictly increasing time order. May be empty."""

    doses: tuple[Dose, ...] = ()

    def __post_init__(self) -> None:
        doses = tuple(self.doses)
        times = [d.time for d in doses]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError(f"Dose times must increase strictly, got {times}")
        object.__setattr__(self, "doses", doses)

    def __len__(self) -> int:
        return len(self.doses)

    def __iter__(self) -> Iterator[Dose]:
        return iter(self.doses)

    @property
    def times(self) -> list[float]:
        return [d.time for d in self.doses]

    @classmethod
    def from_pairs(
        cls, entries: Iterable[tuple[float, float, float]]
    ) -> DoseSchedule:
        """Build a schedule from (time, delta_beta, delta_gamma) triples."""
        return cls(tuple(Dose(*entry) for entry in entries))

    @classmethod
    def parse(cls, items: Sequence[str]) -> DoseSchedule:
        """Build a schedule from ``T:DBETA:DGAMMA`` strings."""
        return cls(tuple(Dose.parse(item) for item in items))

    def to_dict(self) -> list[dict]:
        return [d.to_dict() for d in self.doses]


def default_schedule(
    delta_beta: float,
    delta_gamma: float,
    count: int = 4,
    interval: float = 21.0,
    start: float = 0.0,
) -> DoseSchedule:
    """Return ``count`` identical doses ``interval`` days apart.

    The default is four doses three weeks apart, the usual induction
    course of an anti-CTLA-4 antibody.
    """
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count!r}")
    if count > 1 and interval <= 0:
        raise ValueError(f"interval must be > 0, got {interval!r}")
    return DoseSchedule.from_pairs(
        (start + k * interval, delta_beta, delta_gamma) for k in range(count)
    )


@dataclass(frozen=True)
class JourneySnapshot:
    """Parameters in force after a dose and the class they lead to from there.

    ``projected_class`` is None when the projection was skipped or failed.
    """

    time: float
    beta: float
    gamma: float
    projected_class: ResponseClass | None = None

    def to_dict(self) -> dict:
        return {
            "time": self.time,
            "beta": self.beta,
            "gamma": self.gamma,
            "projected_class": (
                self.projected_class.value if self.projected_class else None
            ),
        }


@dataclass(frozen=True)
class JourneyReport:
    """Snapshots before treatment and after each dose, plus the final outcome."""

    snapshots: tuple[JourneySnapshot, ...]
    final_report: ResponseReport
    trajectory: Trajectory = field(repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "snapshots": [s.to_dict() for s in self.snapshots],
            "final": self.final_report.to_dict(),
        }


def _project(
    params: ModelParams,
    state: np.ndarray,
    t: float,
    cfg: MetricsConfig,
    integrator_config: IntegratorConfig | None,
) -> ResponseClass | None:
    """Classify the run ``params`` would produce if started from ``state`` at ``t``."""
    traj = integrate(
        params, StateVector.from_array(state), t, t + cfg.horizon, integrator_config
    )
    if not traj.ok:
        logger.warning("Projection from t=%.6g failed: %s", t, traj.message)
        return None
    return classify(traj, cfg).response_class


def simulate_with_doses(
    patient: ModelParams,
    state0: StateVector,
    schedule: DoseSchedule,
    horizon: float,
    integrator_config: IntegratorConfig | None = None,
    cfg: MetricsConfig | None = None,
    *,
    project: bool = True,
) -> tuple[Trajectory, JourneyReport]:
    """Integrate over [0, horizon] applying each dose at its time.

    All segments report on the same uniform grid as a dose-free run, so an
    empty schedule reproduces ``integrate`` sample for sample. Dose times
    that fall between grid points are integrated to exactly but not
    reported.

    Args:
        patient: Pre-treatment parameters.
        state0: State at t = 0.
        schedule: Doses, all strictly before ``horizon``.
        horizon: End time in days.
        integrator_config: Integration settings.
        cfg: Metric thresholds for the final report and projections.
        project: Whether to classify each snapshot's projected outcome.

    Returns:
        The concatenated trajectory (carrying the final parameters) and the
        journey report.

    Raises:
        ValueError: If a dose is not strictly before ``horizon``.
        DoseSegmentError: If a segment fails to integrate.
    """
    config = integrator_config or IntegratorConfig()
    cfg = cfg or MetricsConfig()
    late = [d.time for d in schedule if d.time >= horizon]
    if late:
        raise ValueError(f"Dose times {late} are not before the horizon {horizon!r}")

    grid = uniform_grid(0.0, horizon, config.output_dt)
    on_grid = set(grid.tolist())
    boundaries = [0.0, *schedule.times, float(horizon)]
    params = patient
    y = state0.as_array()

    snapshots = [
        JourneySnapshot(
            0.0,
            params.beta,
            params.gamma,
            _project(params, y, 0.0, cfg, config) if project else None,
        )
    ]
    times: list[np.ndarray] = []
    states: list[np.ndarray] = []
    derivs: list[np.ndarray] = []
    accepted = rejected = clamped = 0

    for segment, (a, b) in enumerate(zip(boundaries, boundaries[1:])):
        if segment > 0:
            dose = schedule.doses[segment - 1]
            params = dose.apply(params)
            logger.info(
                "Dose %d at t=%g: beta=%.8g, gamma=%.8g",
                segment,
                dose.time,
                params.beta,
                params.gamma,
            )
            snapshots.append(
                JourneySnapshot(
                    dose.time,
                    params.beta,
                    params.gamma,
                    _project(params, y, a, cfg, config) if project else None,
                )
            )
        if b <= a:
            continue

        inner = grid[(grid > a) & (grid < b)]
        head = [a] if not times else []
        sample_times = np.concatenate([head, inner, [b]])
        part = integrate(
            params,
            StateVector.from_array(y),
            a,
            b,
            config,
            sample_times=sample_times,
        )
        if not part.ok:
            raise DoseSegmentError(segment, part.message)
        accepted += part.step_stats.accepted
        rejected += part.step_stats.rejected
        clamped += part.step_stats.clamped

        keep = np.array([t in on_grid for t in part.times.tolist()])
        times.append(part.times[keep])
        states.append(part.states[keep])
        derivs.append(part.derivatives[keep])
        y = part.states[-1].copy()

    traj = Trajectory(
        times=np.concatenate(times),
        states=np.concatenate(states),
        step_stats=StepStats(accepted, rejected, clamped),
        derivatives=np.concatenate(derivs),
        params=params,
    )
    report = classify(traj, cfg)
    logger.info(
        "Dosed run with %d doses ends as %s",
        len(schedule),
        report.response_class.value,
    )
    return traj, JourneyReport(tuple(snapshots), report, traj)


@dataclass(frozen=True)
class BlockadeThresholds:
    """Edges of the Delayed band through a reference point (beta_ref, gamma_ref).

    Below ``beta_hat`` (with gamma at ``gamma_ref``) there is no response
    and above ``beta_hat + beta_band`` the response is quick. Along gamma
    the order is reversed: no response above ``gamma_hat`` and a quick
    response below ``gamma_hat - gamma_band``. Between the two axes the
    band edges are joined by straight lines.
    """

    beta_ref: float
    gamma_ref: float
    beta_hat: float
    beta_band: float
    gamma_hat: float
    gamma_band: float

    def __post_init__(self) -> None:
        if not self.beta_hat < self.beta_ref < self.beta_hat + self.beta_band:
            raise ValueError("beta_ref must lie strictly inside the beta band")
        if not self.gamma_hat - self.gamma_band < self.gamma_ref < self.gamma_hat:
            raise ValueError("gamma_ref must lie strictly inside the gamma band")

    def region(self, beta: float, gamma: float) -> str:
        """Return ``"none"``, ``"delayed"`` or ``"quick"`` for a (beta, gamma) pair."""
        onset = (beta - self.beta_hat) / (self.beta_ref - self.beta_hat) + (
            self.gamma_ref - gamma
        ) / (self.gamma_hat - self.gamma_ref)
        if onset < 0:
            return "none"
        beta_quick = self.beta_hat + self.beta_band
        gamma_quick = self.gamma_hat - self.gamma_band
        quick = (beta - beta_quick) / (beta_quick - self.beta_ref) + (
            self.gamma_ref - gamma
        ) / (self.gamma_ref - gamma_quick)
        return "quick" if quick > 0 else "delayed"

    def to_dict(self) -> dict:
        return {
            "beta_ref": self.beta_ref,
            "gamma_ref": self.gamma_ref,
            "beta_hat": self.beta_hat,
            "beta_band": self.beta_band,
            "gamma_hat": self.gamma_hat,
            "gamma_band": self.gamma_band,
        }


def blockade_thresholds(
    base: ModelParams,
    cfg: MetricsConfig | None = None,
    integrator_config: IntegratorConfig | None = None,
    *,
    beta_range: tuple[float, float] | None = None,
    gamma_range: tuple[float, float] | None = None,
    beta_resolution: float = 1e-8,
    gamma_resolution: float = 1e-5,
    signal_seed: float = 1.0,
) -> BlockadeThresholds:
    """Locate the Delayed band along beta and gamma through a delayed ``base``.

    The search ranges default to +/-2% of beta and +/-0.1 around gamma.
    """
    cfg = cfg or MetricsConfig()
    beta_range = beta_range or (base.beta * 0.98, base.beta * 1.02)
    gamma_range = gamma_range or (base.gamma - 0.1, base.gamma + 0.1)
    kwargs = {"signal_seed": signal_seed}
    beta_edges = band_edges(
        base, "beta", *beta_range, beta_resolution, cfg, integrator_config, **kwargs
    )
    gamma_edges = band_edges(
        base, "gamma", *gamma_range, gamma_resolution, cfg, integrator_config, **kwargs
    )
    return BlockadeThresholds(
        beta_ref=base.beta,
        gamma_ref=base.gamma,
        beta_hat=beta_edges.lower,
        beta_band=beta_edges.width,
        gamma_hat=gamma_edges.upper,
        gamma_band=gamma_edges.width,
    )


def journey_case(
    pre: tuple[float, float],
    post: tuple[float, float],
    thresholds: BlockadeThresholds,
) -> str:
    """Label the transition from ``pre`` to ``post`` (each a (beta, gamma) pair).

    ``a``: no response stays no response. ``b``: no response becomes
    delayed. ``c``: no response becomes quick. ``d``: delayed stays
    delayed. ``e``: delayed becomes quick.

    Raises:
        ValueError: For transitions a blockade cannot produce (a quick
            starting point, or a move back towards no response).
    """
    before = thresholds.region(*pre)
    after = thresholds.region(*post)
    try:
        return CASES[(before, after)]
    except KeyError:
        raise ValueError(
            f"No treatment-journey case for a move from {before} to {after}"
        ) from None
