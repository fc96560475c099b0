"""Derivative-free calibration of model parameters to a target delay length."""

from __future__ import annotations

import itertools
import logging
import math
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from icb_response.integrator import IntegratorConfig, simulate
from icb_response.metrics import MetricsConfig, delay_length
from icb_response.models import ModelParams, treatment_params

logger = logging.getLogger(__name__)

# Boxes around the baseline; most of a wider box does not respond at all.
DEFAULT_BOUNDS: dict[str, tuple[float, float]] = {
    "beta": (0.0089, 0.0092),
    "gamma": (37.40, 37.43),
}

# Candidate growth rates and the settings whose delays decide between them.
RC_CANDIDATES: tuple[float, ...] = (1.0, 30.0)
RC_SETTINGS: tuple[str, ...] = ("inhibitor_1", "inhibitor_2", "combination")


class InfeasibleFitError(ValueError):
    """Raised when no simulated parameter set produces a response."""


@dataclass(frozen=True)
class FitSpec:
    """What to fit, where to start and when to stop.

    ``bounds`` and ``init`` default to ``DEFAULT_BOUNDS`` and the base
    parameter values respectively. ``initial_step`` is the simplex edge
    length as a fraction of each parameter's bound width.
    """

    free_params: tuple[str, ...]
    target_delay: float
    bounds: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    init: Mapping[str, float] = field(default_factory=dict)
    max_evals: int = 500
    tol_days: float = 1.0
    initial_step: float = 0.01

    def __post_init__(self) -> None:
        object.__setattr__(self, "free_params", tuple(self.free_params))
        known = set(ModelParams.field_names())
        for name in self.free_params:
            if name not in known:
                raise ValueError(f"Unknown model parameter '{name}'")
        if len(set(self.free_params)) != len(self.free_params):
            raise ValueError("free_params contains duplicates")
        bounds = {}
        for name in self.free_params:
            if name in self.bounds:
                lo, hi = self.bounds[name]
            elif name in DEFAULT_BOUNDS:
                lo, hi = DEFAULT_BOUNDS[name]
            else:
                raise ValueError(f"No bounds given for free parameter '{name}'")
            if not 0 <= lo < hi or not math.isfinite(hi):
                raise ValueError(f"Bounds for '{name}' must satisfy 0 <= lo < hi")
            bounds[name] = (float(lo), float(hi))
        object.__setattr__(self, "bounds", bounds)
        for name, value in self.init.items():
            if name not in bounds:
                raise ValueError(f"Initial value given for non-free parameter '{name}'")
            lo, hi = bounds[name]
            if not lo <= value <= hi:
                raise ValueError(
                    f"Initial {name}={value!r} lies outside its bounds [{lo!r}, {hi!r}]"
                )
        if not self.target_delay > 0:
            raise ValueError(f"target_delay must be > 0, got {self.target_delay!r}")
        if self.max_evals < 1:
            raise ValueError(f"max_evals must be >= 1, got {self.max_evals!r}")
        if not self.tol_days > 0:
            raise ValueError(f"tol_days must be > 0, got {self.tol_days!r}")
        if not 0 < self.initial_step <= 0.5:
            raise ValueError(
                f"initial_step must lie in (0, 0.5], got {self.initial_step!r}"
            )

    def start(self, base: ModelParams) -> dict[str, float]:
        """Return the starting value of every free parameter.

        Raises:
            ValueError: If a base value used as the start lies outside its bounds.
        """
        values = {}
        for name in self.free_params:
            value = float(self.init.get(name, getattr(base, name)))
            lo, hi = self.bounds[name]
            if not lo <= value <= hi:
                raise ValueError(
                    f"Starting {name}={value!r} lies outside its bounds "
                    f"[{lo!r}, {hi!r}]"
                )
            values[name] = value
        return values


@dataclass(frozen=True)
class FitResult:
    """Outcome of a calibration run.

    ``residual_history`` holds the best absolute delay error after each
    simplex iteration.
    """

    fitted: ModelParams
    achieved_delay: float | None
    evals: int
    converged: bool
    residual_history: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "fitted": self.fitted.to_dict(),
            "achieved_delay": self.achieved_delay,
            "evals": self.evals,
            "converged": self.converged,
            "residual_history": list(self.residual_history),
        }


@dataclass(frozen=True)
class RcCandidate:
    """Delays measured under one candidate growth rate."""

    r_C: float
    delays: dict[str, float | None]
    score: float

    def to_dict(self) -> dict:
        return {"r_C": self.r_C, "delays": dict(self.delays), "score": self.score}


@dataclass(frozen=True)
class RcReport:
    """Comparison of candidate growth rates against the published delays."""

    targets: dict[str, float]
    candidates: tuple[RcCandidate, ...]
    winner: float

    def to_dict(self) -> dict:
        return {
            "targets": dict(self.targets),
            "candidates": [c.to_dict() for c in self.candidates],
            "winner": self.winner,
        }


class _StopSearch(Exception):
    """Ends the search: a run landed within tolerance or the budget is spent."""


def _lattice(u0: np.ndarray, levels: Sequence[int] = (3, 5, 9)) -> Iterator[np.ndarray]:
    """Yield points of ever finer lattices on the unit cube, nearest ``u0`` first."""
    seen: set[tuple[float, ...]] = set()
    for k in levels:
        axis = np.linspace(0.0, 1.0, k)
        grid = np.array(list(itertools.product(axis, repeat=len(u0))))
        order = np.argsort(np.linalg.norm(grid - u0, axis=1), kind="stable")
        for point in grid[order]:
            key = tuple(point.tolist())
            if key not in seen:
                seen.add(key)
                yield point


def probe_delay(
    params: ModelParams,
    cfg: MetricsConfig,
    integrator_config: IntegratorConfig | None = None,
    signal_seed: float = 1.0,
) -> float | None:
    """Return the delay length of ``params``, stopping the run at the response.

    Returns None when the tumour does not respond within ``cfg.horizon``.
    """
    level = cfg.response_frac * params.C_star

    def responded(t: float, y: np.ndarray) -> bool:
        return y[0] < level

    traj = simulate(
        params, cfg.horizon, integrator_config, signal_seed, stop_when=responded
    )
    traj.raise_for_status()
    return delay_length(traj, cfg)


def fit_delay(
    spec: FitSpec,
    base: ModelParams,
    cfg: MetricsConfig | None = None,
    integrator_config: IntegratorConfig | None = None,
    *,
    signal_seed: float = 1.0,
) -> FitResult:
    """Fit the free parameters so that the delay length hits ``spec.target_delay``.

    The squared delay error is minimised by a bounded Nelder-Mead simplex
    in coordinates normalised to each parameter's bounds. Runs that do not
    respond score ``horizon**2``, growing with the distance from a responding
    anchor. The anchor is the start, or when the start does not respond, the
    nearest responding point of lattices scanned outward from it.

    The search stops as soon as a run lands within ``tol_days`` or after
    ``max_evals`` simulations, the final re-verification included.

    Raises:
        InfeasibleFitError: If every simulated point is a non-response.
        ValueError: If the target lies beyond the metrics horizon.
    """
    cfg = cfg or MetricsConfig()
    if spec.target_delay >= cfg.horizon:
        raise ValueError(
            f"target_delay {spec.target_delay!r} must be below the horizon "
            f"{cfg.horizon!r}"
        )

    if not spec.free_params:
        delay = probe_delay(base, cfg, integrator_config, signal_seed)
        converged = (
            delay is not None and abs(delay - spec.target_delay) <= spec.tol_days
        )
        return FitResult(base, delay, 1, converged)

    names = spec.free_params
    lows = np.array([spec.bounds[n][0] for n in names])
    widths = np.array([spec.bounds[n][1] - spec.bounds[n][0] for n in names])
    start = spec.start(base)
    u0 = np.array([(start[n] - lo) / w for n, lo, w in zip(names, lows, widths)])

    # One simulation stays in reserve for re-verifying the result.
    budget = max(spec.max_evals - 1, 1)
    penalty = cfg.horizon**2
    cache: dict[tuple[float, ...], float | None] = {}
    best: dict = {"error": math.inf, "u": u0.copy()}

    def to_params(u: np.ndarray) -> ModelParams:
        values = lows + np.clip(u, 0.0, 1.0) * widths
        return base.replace(**{n: float(v) for n, v in zip(names, values)})

    def delay_at(u: np.ndarray) -> float | None:
        key = tuple(float(v) for v in np.clip(u, 0.0, 1.0))
        if key in cache:
            return cache[key]
        if len(cache) >= budget:
            raise _StopSearch
        delay = probe_delay(to_params(u), cfg, integrator_config, signal_seed)
        cache[key] = delay
        logger.debug("Run %d at %s: delay=%s", len(cache), key, delay)
        if delay is not None:
            error = abs(delay - spec.target_delay)
            if error < best["error"]:
                best["error"], best["u"] = error, np.array(key)
            if error <= spec.tol_days:
                raise _StopSearch
        return delay

    anchor: np.ndarray | None = u0

    def objective(u: np.ndarray) -> float:
        delay = delay_at(u)
        if delay is None:
            # Non-responses rise away from the responding anchor.
            offset = np.clip(u, 0.0, 1.0) - anchor
            return penalty * (1.0 + float(offset @ offset))
        return (delay - spec.target_delay) ** 2

    history: list[float] = []

    def record(xk: np.ndarray) -> None:
        history.append(best["error"])

    try:
        if delay_at(u0) is None:
            anchor = next((u for u in _lattice(u0) if delay_at(u) is not None), None)
            if anchor is not None:
                logger.info("Start does not respond; searching from %s", anchor)
        if anchor is not None:
            simplex = [anchor]
            for k in range(len(names)):
                vertex = anchor.copy()
                step = spec.initial_step
                vertex[k] += step if vertex[k] + step <= 1.0 else -step
                simplex.append(vertex)
            minimize(
                objective,
                anchor,
                method="Nelder-Mead",
                bounds=[(0.0, 1.0)] * len(names),
                callback=record,
                options={
                    "initial_simplex": np.array(simplex),
                    "maxfev": budget,
                    "xatol": 1e-9,
                    "fatol": 1e-6 * spec.tol_days**2,
                },
            )
    except _StopSearch:
        pass

    if best["error"] == math.inf:
        raise InfeasibleFitError(
            f"All {len(cache)} simulated parameter sets are non-responses; "
            f"widen the bounds of {', '.join(names)}"
        )

    fitted = to_params(best["u"])
    if len(cache) < spec.max_evals:
        achieved = probe_delay(fitted, cfg, integrator_config, signal_seed)
        evals = len(cache) + 1
    else:
        achieved = cache[tuple(best["u"].tolist())]
        evals = len(cache)
    converged = (
        achieved is not None and abs(achieved - spec.target_delay) <= spec.tol_days
    )
    if history and history[-1] != best["error"]:
        history.append(best["error"])
    if converged:
        logger.info(
            "Fit converged after %d simulations: delay %.3f days (target %.3f)",
            evals,
            achieved,
            spec.target_delay,
        )
    else:
        logger.warning(
            "Fit did not converge after %d simulations: best delay %s (target %.3f)",
            evals,
            achieved,
            spec.target_delay,
        )
    return FitResult(fitted, achieved, evals, converged, tuple(history))


def resolve_rc(
    targets: Sequence[float] = (150.0, 120.0, 60.0),
    cfg: MetricsConfig | None = None,
    integrator_config: IntegratorConfig | None = None,
    *,
    base: ModelParams | None = None,
    candidates: Sequence[float] = RC_CANDIDATES,
    signal_seed: float = 1.0,
) -> RcReport:
    """Decide which growth rate reproduces the published treatment delays.

    ``targets`` are the expected delays, in days, of inhibitor 1,
    inhibitor 2 and the combination. Each candidate ``r_C`` is scored by
    the summed squared relative delay error; a missing delay scores
    infinity. Ties go to the earlier candidate.
    """
    cfg = cfg or MetricsConfig()
    if len(targets) != len(RC_SETTINGS):
        raise ValueError(f"Expected {len(RC_SETTINGS)} targets, got {len(targets)}")
    goal = dict(zip(RC_SETTINGS, (float(t) for t in targets)))

    results = []
    for r_C in candidates:
        delays: dict[str, float | None] = {}
        for setting in RC_SETTINGS:
            params = treatment_params(setting, base).replace(r_C=float(r_C))
            delays[setting] = probe_delay(params, cfg, integrator_config, signal_seed)
        score = sum(
            math.inf if delays[s] is None else ((delays[s] - goal[s]) / goal[s]) ** 2
            for s in RC_SETTINGS
        )
        results.append(RcCandidate(float(r_C), delays, score))
        logger.info("r_C=%g: delays %s, score %.4g", r_C, delays, score)

    winner = min(results, key=lambda c: c.score)
    logger.info("Growth rate r_C=%g best matches the published delays", winner.r_C)
    return RcReport(goal, tuple(results), winner.r_C)
