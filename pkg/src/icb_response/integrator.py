"""Adaptive Dormand-Prince integration of the tumour-immune system.

The delayed response is a fast-slow transition: months of quasi-static
dynamics end in a spike lasting hours, so the step size adapts over
several orders of magnitude. Samples are reported on a uniform output
grid using the pair's continuous extension, which means the reporting
grid never influences the accepted steps.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from icb_response.dynamics import rhs_array
from icb_response.models import (
    STATE_COMPONENTS,
    ModelParams,
    StateVector,
    initial_state,
)

logger = logging.getLogger(__name__)

# Dormand-Prince 5(4) tableau.
_A = np.array(
    [
        [0.0, 0.0, 0.0, 0.0, 0.0],
        [1 / 5, 0.0, 0.0, 0.0, 0.0],
        [3 / 40, 9 / 40, 0.0, 0.0, 0.0],
        [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0],
        [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0],
        [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    ]
)
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# Difference between the embedded fourth-order and the fifth-order weights.
_E = np.array(
    [
        -71 / 57600,
        0.0,
        71 / 16695,
        -71 / 1920,
        17253 / 339200,
        -22 / 525,
        1 / 40,
    ]
)
# Fourth-order continuous extension, y(t + x h) = y + h * (K^T P) [x, x^2, x^3, x^4].
_P = np.array(
    [
        [
            1.0,
            -8048581381 / 2820520608,
            8663915743 / 2820520608,
            -12715105075 / 11282082432,
        ],
        [0.0, 0.0, 0.0, 0.0],
        [
            0.0,
            131558114200 / 32700410799,
            -68118460800 / 10900136933,
            87487479700 / 32700410799,
        ],
        [
            0.0,
            -1754552775 / 470086768,
            14199869525 / 1410260304,
            -10690763975 / 1880347072,
        ],
        [
            0.0,
            127303824393 / 49829197408,
            -318862633887 / 49829197408,
            701980252875 / 199316789632,
        ],
        [
            0.0,
            -282668133 / 205662961,
            2019193451 / 616988883,
            -1453857185 / 822651844,
        ],
        [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)
_ORDER_EXPONENT = -1.0 / 5.0
_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0


class IntegrationError(RuntimeError):
    """Raised when a trajectory did not reach its horizon."""


class Termination(str, Enum):
    """How an integration ended."""

    REACHED_HORIZON = "reached-horizon"
    EVENT_STOP = "event-stop"
    STEP_FAILURE = "step-failure"


@dataclass(frozen=True)
class IntegratorConfig:
    """Error control and reporting settings.

    ``abs_tol`` is either one value for every component or five values
    ordered (C, A, I, E, S).
    """

    rel_tol: float = 1e-8
    abs_tol: float | tuple[float, ...] = 1e-9
    h_init: float = 1e-3
    h_max: float = 1.0
    h_min: float = 1e-10
    max_steps: int = 2_000_000
    output_dt: float = 0.05

    def __post_init__(self) -> None:
        if not 0 < self.rel_tol < 1:
            raise ValueError(f"rel_tol must lie in (0, 1), got {self.rel_tol!r}")
        if isinstance(self.abs_tol, (list, tuple)):
            if len(self.abs_tol) != len(STATE_COMPONENTS):
                raise ValueError(
                    f"abs_tol needs {len(STATE_COMPONENTS)} values, "
                    f"got {len(self.abs_tol)}"
                )
            object.__setattr__(self, "abs_tol", tuple(float(a) for a in self.abs_tol))
        tolerances = np.atleast_1d(np.asarray(self.abs_tol, dtype=float))
        if not np.all(tolerances > 0) or not np.all(np.isfinite(tolerances)):
            raise ValueError(f"abs_tol must be > 0, got {self.abs_tol!r}")
        if not 0 < self.h_min <= self.h_init <= self.h_max:
            raise ValueError(
                "step sizes must satisfy 0 < h_min <= h_init <= h_max, got "
                f"h_min={self.h_min!r}, h_init={self.h_init!r}, h_max={self.h_max!r}"
            )
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps!r}")
        if not self.output_dt > 0:
            raise ValueError(f"output_dt must be > 0, got {self.output_dt!r}")

    def abs_tol_array(self) -> np.ndarray:
        """Return the absolute tolerance broadcast to one value per component."""
        return np.broadcast_to(
            np.asarray(self.abs_tol, dtype=float), (len(STATE_COMPONENTS),)
        ).copy()

    def with_tolerances(self, rel_tol: float, abs_tol: float) -> IntegratorConfig:
        """Return a copy with different tolerances."""
        return IntegratorConfig(
            rel_tol=rel_tol,
            abs_tol=abs_tol,
            h_init=self.h_init,
            h_max=self.h_max,
            h_min=self.h_min,
            max_steps=self.max_steps,
            output_dt=self.output_dt,
        )


@dataclass(frozen=True)
class StepStats:
    """Accepted, rejected and clamped step counts."""

    accepted: int = 0
    rejected: int = 0
    clamped: int = 0


def _readonly(values: np.ndarray) -> np.ndarray:
    values.setflags(write=False)
    return values


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time-ordered samples of the state with integration metadata.

    ``states`` has one row per sample ordered (C, A, I, E, S).
    ``derivatives`` holds the time derivative at each sample when known;
    crossing refinement uses it for Hermite interpolation.
    """

    times: np.ndarray
    states: np.ndarray
    step_stats: StepStats = field(default_factory=StepStats)
    termination: Termination = Termination.REACHED_HORIZON
    derivatives: np.ndarray | None = None
    params: ModelParams | None = None
    message: str = ""

    def __post_init__(self) -> None:
        times = np.array(self.times, dtype=float)
        states = np.array(self.states, dtype=float)
        if times.ndim != 1 or times.size == 0:
            raise ValueError("Trajectory needs at least one sample time")
        if states.shape != (times.size, len(STATE_COMPONENTS)):
            raise ValueError(
                f"states must have shape ({times.size}, {len(STATE_COMPONENTS)}), "
                f"got {states.shape}"
            )
        if np.any(np.diff(times) <= 0):
            raise ValueError("Trajectory times must be strictly increasing")
        if not np.all(np.isfinite(states)) or np.any(states < 0):
            raise ValueError("Trajectory states must be finite and non-negative")
        object.__setattr__(self, "times", _readonly(times))
        object.__setattr__(self, "states", _readonly(states))
        object.__setattr__(self, "termination", Termination(self.termination))
        if self.derivatives is not None:
            derivatives = np.array(self.derivatives, dtype=float)
            if derivatives.shape != states.shape:
                raise ValueError("derivatives must have the same shape as states")
            object.__setattr__(self, "derivatives", _readonly(derivatives))

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def ok(self) -> bool:
        """True unless the integration failed."""
        return self.termination is not Termination.STEP_FAILURE

    def component(self, name: str) -> np.ndarray:
        """Return the samples of one state component (e.g. ``"C"``)."""
        return self.states[:, _component_index(name)]

    def component_derivative(self, name: str) -> np.ndarray | None:
        if self.derivatives is None:
            return None
        return self.derivatives[:, _component_index(name)]

    def state_at(self, index: int) -> StateVector:
        return StateVector.from_array(self.states[index])

    @property
    def final_state(self) -> StateVector:
        return self.state_at(-1)

    def raise_for_status(self) -> None:
        """Raise IntegrationError if the integration failed."""
        if not self.ok:
            raise IntegrationError(
                f"Integration failed at t={self.t_end:.6g}: {self.message}"
            )


def _component_index(name: str) -> int:
    try:
        return STATE_COMPONENTS.index(name)
    except ValueError:
        raise ValueError(
            f"Unknown state component '{name}'. "
            f"Expected one of {', '.join(STATE_COMPONENTS)}."
        ) from None


def uniform_grid(t0: float, t1: float, dt: float) -> np.ndarray:
    """Return {t0, t0 + dt, ..., t1}, ending exactly at t1."""
    span = t1 - t0
    if span <= 0:
        return np.array([t0], dtype=float)
    n = int(round(span / dt))
    if abs(n * dt - span) > 1e-9 * max(1.0, span):
        n = int(math.floor(span / dt))
        grid = t0 + dt * np.arange(n + 1, dtype=float)
        return np.append(grid, t1)
    grid = t0 + dt * np.arange(n + 1, dtype=float)
    grid[-1] = t1
    return grid


def _dopri_step(
    fun: Callable[[np.ndarray], np.ndarray],
    y: np.ndarray,
    f: np.ndarray,
    h: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Take one Dormand-Prince step; return (y_new, f_new, error, stages)."""
    stages = np.empty((7, y.size))
    stages[0] = f
    for s in range(1, 6):
        stages[s] = fun(y + h * (_A[s, :s] @ stages[:s]))
    y_new = y + h * (_B @ stages[:6])
    f_new = fun(y_new)
    stages[6] = f_new
    error = h * (_E @ stages)
    return y_new, f_new, error, stages


def _dense_samples(
    y: np.ndarray, stages: np.ndarray, h: float, x: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate the continuous extension and its derivative at fractions x."""
    Q = stages.T @ _P  # noqa: N806
    powers = np.cumprod(np.tile(x[:, None], (1, 4)), axis=1)
    slopes = np.column_stack(
        [np.ones_like(x), 2.0 * x, 3.0 * x**2, 4.0 * x**3]
    )
    values = y + h * powers @ Q.T
    derivatives = slopes @ Q.T
    return values, derivatives


def integrate(
    params: ModelParams,
    state0: StateVector,
    t0: float,
    t1: float,
    config: IntegratorConfig | None = None,
    *,
    sample_times: Sequence[float] | np.ndarray | None = None,
    stop_when: Callable[[float, np.ndarray], bool] | None = None,
) -> Trajectory:
    """Integrate the system from ``state0`` at ``t0`` to ``t1``.

    Args:
        params: Model parameters.
        state0: Initial state.
        t0: Start time in days.
        t1: End time in days (``t1 >= t0``).
        config: Error control and reporting settings.
        sample_times: Explicit reporting times within [t0, t1]; by default
            the uniform grid with spacing ``config.output_dt``.
        stop_when: Predicate on (t, state array) checked after every
            accepted step. When it first holds, integration continues to
            the next reporting time and stops with ``EVENT_STOP``.

    Returns:
        The sampled trajectory. On step failure the partial trajectory is
        returned with ``termination == STEP_FAILURE``.
    """
    config = config or IntegratorConfig()
    if t1 < t0:
        raise ValueError(f"t1 must be >= t0, got t0={t0!r}, t1={t1!r}")

    if sample_times is None:
        grid = uniform_grid(t0, t1, config.output_dt)
    else:
        grid = np.asarray(sample_times, dtype=float)
        if grid.ndim != 1 or grid.size == 0:
            raise ValueError("sample_times must be a non-empty 1-D sequence")
        if np.any(np.diff(grid) <= 0) or grid[0] < t0 or grid[-1] > t1:
            raise ValueError("sample_times must increase strictly within [t0, t1]")

    def fun(y: np.ndarray) -> np.ndarray:
        return rhs_array(y, params)

    atol = config.abs_tol_array()
    rtol = config.rel_tol
    y = state0.as_array()
    f = fun(y)

    out_times: list[float] = []
    out_states: list[np.ndarray] = []
    out_derivs: list[np.ndarray] = []
    k = 0
    if grid[0] == t0:
        out_times.append(t0)
        out_states.append(y.copy())
        out_derivs.append(f.copy())
        k = 1

    def finish(termination: Termination, message: str = "") -> Trajectory:
        if not out_times:
            out_times.append(t)
            out_states.append(y.copy())
            out_derivs.append(f.copy())
        stats = StepStats(accepted=accepted, rejected=rejected, clamped=clamped)
        failed = termination is Termination.STEP_FAILURE
        log = logger.warning if failed else logger.debug
        log(
            "Integration %s at t=%.6g (%d accepted, %d rejected steps)%s",
            termination.value,
            t,
            accepted,
            rejected,
            f": {message}" if message else "",
        )
        return Trajectory(
            times=np.array(out_times),
            states=np.array(out_states),
            step_stats=stats,
            termination=termination,
            derivatives=np.array(out_derivs),
            params=params,
            message=message,
        )

    t = float(t0)
    end = float(t1)
    accepted = rejected = clamped = 0
    h = min(config.h_init, config.h_max)
    previous_rejected = False
    stopping = False

    while t < end:
        if accepted + rejected >= config.max_steps:
            return finish(
                Termination.STEP_FAILURE,
                f"exceeded max_steps={config.max_steps}",
            )
        landing = h >= end - t
        if landing:
            h = end - t
        t_new = end if landing else t + h

        y_new, f_new, error, stages = _dopri_step(fun, y, f, h)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.max(np.abs(error) / scale))
        if not math.isfinite(err):
            err = math.inf

        if err <= 1.0:
            negative = y_new < 0
            if negative.any():
                if np.all(-y_new[negative] < atol[negative]):
                    y_new[negative] = 0.0
                    f_new = fun(y_new)
                    clamped += 1
                else:
                    rejected += 1
                    previous_rejected = True
                    h *= 0.5
                    if h < config.h_min:
                        return finish(
                            Termination.STEP_FAILURE,
                            f"negative overshoot needs h < h_min={config.h_min:g}",
                        )
                    continue

            accepted += 1
            stop = k + int(np.searchsorted(grid[k:], t_new, side="right"))
            if stop > k:
                x = (grid[k:stop] - t) / h
                values, derivs = _dense_samples(y, stages, h, x)
                if grid[stop - 1] == t_new:
                    values[-1] = y_new
                    derivs[-1] = f_new
                np.maximum(values, 0.0, out=values)
                out_times.extend(grid[k:stop].tolist())
                out_states.extend(values)
                out_derivs.extend(derivs)
                k = stop

            t, y, f = t_new, y_new, f_new

            if stop_when is not None and not stopping and stop_when(t, y):
                stopping = True
                if k < grid.size:
                    end = float(grid[k])
                else:
                    return finish(Termination.EVENT_STOP)

            if err == 0.0:
                factor = _MAX_FACTOR
            else:
                factor = min(_MAX_FACTOR, _SAFETY * err**_ORDER_EXPONENT)
            if previous_rejected:
                factor = min(1.0, factor)
            previous_rejected = False
            h = min(h * max(factor, _MIN_FACTOR), config.h_max)
        else:
            rejected += 1
            previous_rejected = True
            factor = _SAFETY * err**_ORDER_EXPONENT if math.isfinite(err) else 0.0
            h *= max(_MIN_FACTOR, factor)
            if h < config.h_min:
                return finish(
                    Termination.STEP_FAILURE,
                    f"tolerance needs h < h_min={config.h_min:g}",
                )

    return finish(Termination.EVENT_STOP if stopping else Termination.REACHED_HORIZON)


def simulate(
    params: ModelParams,
    horizon: float,
    config: IntegratorConfig | None = None,
    signal_seed: float = 1.0,
    **kwargs,
) -> Trajectory:
    """Integrate from the tumour-escape initial state over [0, horizon]."""
    return integrate(
        params, initial_state(params, signal_seed), 0.0, horizon, config, **kwargs
    )


def find_crossing(
    traj: Trajectory,
    component: str,
    level: float,
    direction: str = "downward",
    after: float | None = None,
) -> float | None:
    """Return the earliest time after ``after`` at which a component crosses ``level``.

    The crossing is bracketed by two consecutive samples and refined by
    bisection on a cubic Hermite interpolant (linear when the trajectory
    carries no derivatives) to within ``output_dt / 1000``.

    Args:
        traj: Sampled trajectory.
        component: State component name, one of ``C, A, I, E, S``.
        level: Crossing level (>= 0).
        direction: ``"downward"`` or ``"upward"``.
        after: Only crossings strictly later than this time count
            (default: before the first sample).
    """
    if level < 0:
        raise ValueError(f"level must be >= 0, got {level!r}")
    return crossing_time(
        traj.times,
        traj.component(component),
        level,
        direction,
        after=after,
        slopes=traj.component_derivative(component),
    )


def crossing_times(
    times: np.ndarray,
    values: np.ndarray,
    level: float,
    direction: str,
    *,
    after: float | None = None,
    slopes: np.ndarray | None = None,
) -> list[float]:
    """Return every refined crossing of ``level`` in ``direction``, in order."""
    if direction not in ("downward", "upward"):
        raise ValueError(f"direction must be 'downward' or 'upward', got {direction!r}")
    shifted = np.asarray(values, dtype=float) - level
    if direction == "downward":
        candidates = np.nonzero((shifted[:-1] > 0) & (shifted[1:] <= 0))[0]
    else:
        candidates = np.nonzero((shifted[:-1] < 0) & (shifted[1:] >= 0))[0]

    found: list[float] = []
    for i in candidates:
        t = _refine(times, shifted, slopes, int(i))
        if after is None or t > after:
            found.append(t)
    return found


def crossing_time(
    times: np.ndarray,
    values: np.ndarray,
    level: float,
    direction: str,
    *,
    after: float | None = None,
    slopes: np.ndarray | None = None,
) -> float | None:
    """Return the first crossing from ``crossing_times`` or None."""
    found = crossing_times(
        times, values, level, direction, after=after, slopes=slopes
    )
    return found[0] if found else None


def _refine(
    times: np.ndarray, shifted: np.ndarray, slopes: np.ndarray | None, i: int
) -> float:
    """Bisect the local interpolant between samples i and i + 1."""
    ta, tb = float(times[i]), float(times[i + 1])
    fa, fb = float(shifted[i]), float(shifted[i + 1])
    if fb == 0.0:
        return tb
    h = tb - ta

    if slopes is None:
        def interp(s: float) -> float:
            return fa + (fb - fa) * s
    else:
        da, db = float(slopes[i]) * h, float(slopes[i + 1]) * h

        def interp(s: float) -> float:
            s2, s3 = s * s, s * s * s
            return (
                (2 * s3 - 3 * s2 + 1) * fa
                + (s3 - 2 * s2 + s) * da
                + (-2 * s3 + 3 * s2) * fb
                + (s3 - s2) * db
            )

    lo, hi = 0.0, 1.0
    sign_lo = fa > 0
    # 2^-14 of a sample interval is finer than 1/1000 of it.
    for _ in range(14):
        mid = 0.5 * (lo + hi)
        if (interp(mid) > 0) == sign_lo:
            lo = mid
        else:
            hi = mid
    return ta + 0.5 * (lo + hi) * h
