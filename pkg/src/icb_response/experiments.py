"""Parameter-space studies: sensitivities, critical thresholds and region maps.

Every row, threshold step and grid cell is an independent simulation.
With ``workers > 1`` cells run in a process pool; results are always
assembled in input order.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import TypeVar

import numpy as np

from icb_response.integrator import IntegrationError, IntegratorConfig
from icb_response.metrics import (
    MetricsConfig,
    ResponseClass,
    ResponseReport,
    evaluate_params,
)
from icb_response.models import ModelParams

logger = logging.getLogger(__name__)

_T = TypeVar("_T")
_R = TypeVar("_R")


class BracketError(ValueError):
    """Raised when both ends of a threshold bracket fall in the same class."""


@dataclass(frozen=True)
class SensitivityRow:
    """Relative change of delay and dormancy after perturbing one parameter.

    ``delta_delay`` is ``math.inf`` when the perturbed run does not respond.
    Deltas are None when the quantity cannot be measured.
    """

    param_name: str
    perturbation: float
    delta_delay: float | None
    delta_dormancy: float | None
    response_class: ResponseClass | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "param_name": self.param_name,
            "perturbation": self.perturbation,
            "delta_delay": self.delta_delay,
            "delta_dormancy": self.delta_dormancy,
            "class": self.response_class.value if self.response_class else None,
            "error": self.error,
        }


@dataclass(frozen=True)
class ThresholdResult:
    """A located class boundary along one parameter."""

    param_name: str
    critical_value: float
    bracket_width: float
    side_classes: tuple[ResponseClass, ResponseClass]
    evaluations: int = 0

    def to_dict(self) -> dict:
        return {
            "param_name": self.param_name,
            "critical_value": self.critical_value,
            "bracket_width": self.bracket_width,
            "side_classes": [c.value for c in self.side_classes],
            "evaluations": self.evaluations,
        }


@dataclass(frozen=True)
class BandEdges:
    """Both edges of the Delayed band along one parameter."""

    param_name: str
    lower: float
    upper: float

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def to_dict(self) -> dict:
        return {
            "param_name": self.param_name,
            "lower": self.lower,
            "upper": self.upper,
            "width": self.width,
        }


@dataclass(frozen=True)
class AxisSpec:
    """One axis of a region map: a parameter swept over ``count`` values."""

    name: str
    lo: float
    hi: float
    count: int

    def __post_init__(self) -> None:
        if self.name not in ModelParams.field_names():
            raise ValueError(f"Unknown model parameter '{self.name}'")
        if self.count < 1:
            raise ValueError(f"Axis '{self.name}' needs count >= 1, got {self.count}")
        if self.hi < self.lo or (self.count > 1 and self.hi == self.lo):
            raise ValueError(
                f"Axis '{self.name}' needs lo < hi, got [{self.lo}, {self.hi}]"
            )

    def values(self) -> np.ndarray:
        if self.count == 1:
            return np.array([self.lo])
        return np.linspace(self.lo, self.hi, self.count)

    def to_dict(self) -> dict:
        return {"name": self.name, "lo": self.lo, "hi": self.hi, "count": self.count}


@dataclass(frozen=True)
class RegionMap:
    """Response class per grid cell plus the Delayed band width per row.

    ``classes[i][j]`` belongs to the i-th value of ``axis1`` and the j-th
    value of ``axis2``; it is None when that cell failed (see ``failures``).
    """

    axis1: AxisSpec
    axis2: AxisSpec
    classes: tuple[tuple[ResponseClass | None, ...], ...]
    band_width: tuple[float | None, ...]
    failures: tuple[tuple[int, int, str], ...] = ()

    def __post_init__(self) -> None:
        if len(self.classes) != self.axis1.count or any(
            len(row) != self.axis2.count for row in self.classes
        ):
            raise ValueError("RegionMap grid does not match its axis specs")

    def to_dict(self) -> dict:
        return {
            "axis1": self.axis1.to_dict(),
            "axis2": self.axis2.to_dict(),
            "classes": [
                [c.value if c else None for c in row] for row in self.classes
            ],
            "band_width": list(self.band_width),
            "failures": [
                {"row": i, "column": j, "error": message}
                for i, j, message in self.failures
            ],
        }


def _map_ordered(
    fn: Callable[[_T], _R], items: Iterable[_T], workers: int = 1
) -> list[_R]:
    """Apply ``fn`` to every item, in a process pool when ``workers > 1``."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _evaluate_safely(
    params: ModelParams,
    cfg: MetricsConfig,
    integrator_config: IntegratorConfig | None,
    signal_seed: float,
) -> tuple[ResponseReport | None, str | None]:
    try:
        return evaluate_params(params, cfg, integrator_config, signal_seed), None
    except (IntegrationError, ValueError) as exc:
        return None, str(exc)


def _relative_change(value: float | None, reference: float | None) -> float | None:
    if value is None or reference is None or reference == 0:
        return None
    return (value - reference) / reference


def oat_sensitivity(
    baseline: ModelParams,
    frac: float = 0.01,
    cfg: MetricsConfig | None = None,
    integrator_config: IntegratorConfig | None = None,
    *,
    signal_seed: float = 1.0,
    workers: int = 1,
) -> list[SensitivityRow]:
    """Perturb each parameter by ``frac`` in turn and measure delay and dormancy.

    Args:
        baseline: Parameters producing a delayed response.
        frac: Signed relative perturbation, e.g. 0.01 for +1%.
        cfg: Metric thresholds.
        integrator_config: Integration settings.
        signal_seed: Initial antigen and inflammation level.
        workers: Worker processes for the perturbed runs.

    Returns:
        One row per model parameter, in declaration order. A failed run
        yields a row with ``error`` set instead of aborting the study.

    Raises:
        ValueError: If the baseline itself is not a delayed response.
    """
    cfg = cfg or MetricsConfig()
    reference = evaluate_params(baseline, cfg, integrator_config, signal_seed)
    if reference.response_class is not ResponseClass.DELAYED:
        raise ValueError(
            "oat_sensitivity needs a delayed-response baseline, got "
            f"{reference.response_class.value}"
        )
    logger.info(
        "Baseline delay %.3f days, dormancy %s days",
        reference.delay_length,
        reference.dormancy_length,
    )

    names = ModelParams.field_names()
    if frac == 0:
        outcomes = [(reference, None)] * len(names)
    else:
        perturbed = [baseline.scaled(name, 1.0 + frac) for name in names]
        outcomes = _map_ordered(
            partial(
                _evaluate_safely,
                cfg=cfg,
                integrator_config=integrator_config,
                signal_seed=signal_seed,
            ),
            perturbed,
            workers,
        )

    rows: list[SensitivityRow] = []
    for name, (report, error) in zip(names, outcomes):
        if report is None:
            logger.warning("Sensitivity run for %s failed: %s", name, error)
            rows.append(SensitivityRow(name, frac, None, None, error=error))
            continue
        if report.response_class is ResponseClass.NO_RESPONSE:
            delta_delay: float | None = math.inf
        else:
            delta_delay = _relative_change(report.delay_length, reference.delay_length)
        rows.append(
            SensitivityRow(
                param_name=name,
                perturbation=frac,
                delta_delay=delta_delay,
                delta_dormancy=_relative_change(
                    report.dormancy_length, reference.dormancy_length
                ),
                response_class=report.response_class,
            )
        )
        logger.debug("%s: delta_delay=%s", name, delta_delay)
    return rows


def bisect_boundary(
    in_target: Callable[[float], bool],
    lo: float,
    hi: float,
    resolution: float,
) -> tuple[float, float]:
    """Shrink [lo, hi] around the point where ``in_target`` switches on.

    ``in_target(hi)`` is assumed True and ``in_target(lo)`` False; the
    invariant is kept at every step, so the returned bracket still
    straddles a switch and is no wider than ``resolution``.
    """
    if resolution <= 0:
        raise ValueError(f"resolution must be > 0, got {resolution!r}")
    if not lo < hi:
        raise ValueError(f"bracket needs lo < hi, got [{lo!r}, {hi!r}]")
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if in_target(mid):
            hi = mid
        else:
            lo = mid
    return lo, hi


def find_threshold(
    base: ModelParams,
    param_name: str,
    lo: float,
    hi: float,
    resolution: float,
    cfg: MetricsConfig | None = None,
    integrator_config: IntegratorConfig | None = None,
    *,
    classifier: Callable[[ModelParams], ResponseClass] | None = None,
    signal_seed: float = 1.0,
) -> ThresholdResult:
    """Locate the class boundary of ``param_name`` inside [lo, hi] by bisection.

    The predicate is the full classification. Bisection tracks the class
    found at ``hi``, so when three classes lie along the ray the boundary
    returned is the one bordering the ``hi`` class.

    Raises:
        BracketError: If ``lo`` and ``hi`` classify the same.
    """
    if param_name not in ModelParams.field_names():
        raise ValueError(f"Unknown model parameter '{param_name}'")
    cfg = cfg or MetricsConfig()
    if classifier is None:

        def classifier(params: ModelParams) -> ResponseClass:
            return evaluate_params(
                params, cfg, integrator_config, signal_seed
            ).response_class

    seen: dict[float, ResponseClass] = {}

    def class_at(value: float) -> ResponseClass:
        if value not in seen:
            seen[value] = classifier(base.replace(**{param_name: value}))
        return seen[value]

    below, above = class_at(lo), class_at(hi)
    if below is above:
        raise BracketError(
            f"{param_name}={lo!r} and {param_name}={hi!r} both classify as "
            f"{below.value}"
        )
    lo, hi = bisect_boundary(lambda v: class_at(v) is above, lo, hi, resolution)
    result = ThresholdResult(
        param_name=param_name,
        critical_value=0.5 * (lo + hi),
        bracket_width=hi - lo,
        side_classes=(class_at(lo), above),
        evaluations=len(seen),
    )
    logger.info(
        "Threshold for %s at %.8g (%s below, %s above, width %.2g)",
        param_name,
        result.critical_value,
        result.side_classes[0].value,
        above.value,
        result.bracket_width,
    )
    return result


def band_edges(
    base: ModelParams,
    param_name: str,
    lo: float,
    hi: float,
    resolution: float,
    cfg: MetricsConfig | None = None,
    integrator_config: IntegratorConfig | None = None,
    *,
    classifier: Callable[[ModelParams], ResponseClass] | None = None,
    signal_seed: float = 1.0,
) -> BandEdges:
    """Return both edges of the Delayed band through ``base`` along one parameter.

    An edge that does not leave the band inside [lo, hi] is reported at
    the bracket end.

    Raises:
        ValueError: If ``base`` is not a delayed response or lies outside [lo, hi].
    """
    cfg = cfg or MetricsConfig()
    centre = getattr(base, param_name)
    if not lo <= centre <= hi:
        raise ValueError(f"{param_name}={centre!r} lies outside [{lo!r}, {hi!r}]")
    if classifier is None:

        def classifier(params: ModelParams) -> ResponseClass:
            return evaluate_params(
                params, cfg, integrator_config, signal_seed
            ).response_class

    if classifier(base) is not ResponseClass.DELAYED:
        raise ValueError(f"band_edges needs a delayed base point for {param_name}")

    seen: dict[float, bool] = {centre: True}

    def delayed(value: float) -> bool:
        if value not in seen:
            params = base.replace(**{param_name: value})
            seen[value] = classifier(params) is ResponseClass.DELAYED
        return seen[value]

    # Each bracket keeps a delayed point at its inner end.
    if delayed(lo):
        lower = lo
    else:
        a, b = bisect_boundary(delayed, lo, centre, resolution)
        lower = 0.5 * (a + b)
    if delayed(hi):
        upper = hi
    else:
        a, b = bisect_boundary(lambda v: not delayed(v), centre, hi, resolution)
        upper = 0.5 * (a + b)
    edges = BandEdges(param_name, lower, upper)
    logger.info(
        "Delayed band in %s: [%.8g, %.8g], width %.3g",
        param_name,
        lower,
        upper,
        edges.width,
    )
    return edges


def delay_scan(
    base: ModelParams,
    param_name: str,
    values: Sequence[float],
    cfg: MetricsConfig | None = None,
    integrator_config: IntegratorConfig | None = None,
    *,
    signal_seed: float = 1.0,
    workers: int = 1,
) -> list[float | None]:
    """Return the delay length at each value of one parameter (None: no response)."""
    cfg = cfg or MetricsConfig()
    runs = _map_ordered(
        partial(
            evaluate_params,
            cfg=cfg,
            integrator_config=integrator_config,
            signal_seed=signal_seed,
        ),
        [base.replace(**{param_name: float(v)}) for v in values],
        workers,
    )
    return [report.delay_length for report in runs]


def region_map(
    base: ModelParams,
    axis1: AxisSpec,
    axis2: AxisSpec,
    cfg: MetricsConfig | None = None,
    integrator_config: IntegratorConfig | None = None,
    *,
    resolution: float | None = None,
    signal_seed: float = 1.0,
    workers: int = 1,
) -> RegionMap:
    """Classify every cell of a two-parameter grid and measure the Delayed band.

    The band width of each row spans from the first to the last Delayed
    cell, with both edges refined by ``find_threshold`` against the
    neighbouring cells. Rows without a Delayed cell have width None.

    Args:
        resolution: Edge refinement resolution along ``axis2``; defaults to
            1/64 of the grid spacing.
    """
    cfg = cfg or MetricsConfig()
    values1, values2 = axis1.values(), axis2.values()
    cells = [
        base.replace(**{axis1.name: float(v1), axis2.name: float(v2)})
        for v1 in values1
        for v2 in values2
    ]
    logger.info(
        "Mapping %d x %d grid over (%s, %s)",
        axis1.count,
        axis2.count,
        axis1.name,
        axis2.name,
    )
    outcomes = _map_ordered(
        partial(
            _evaluate_safely,
            cfg=cfg,
            integrator_config=integrator_config,
            signal_seed=signal_seed,
        ),
        cells,
        workers,
    )

    classes: list[tuple[ResponseClass | None, ...]] = []
    failures: list[tuple[int, int, str]] = []
    for i in range(axis1.count):
        row: list[ResponseClass | None] = []
        for j in range(axis2.count):
            report, error = outcomes[i * axis2.count + j]
            if report is None:
                failures.append((i, j, error or "unknown failure"))
                logger.warning("Grid cell (%d, %d) failed: %s", i, j, error)
                row.append(None)
            else:
                row.append(report.response_class)
        classes.append(tuple(row))

    if resolution is None:
        spacing = (axis2.hi - axis2.lo) / max(axis2.count - 1, 1)
        resolution = spacing / 64 if spacing > 0 else 1e-9

    band_width = tuple(
        _row_band_width(
            base.replace(**{axis1.name: float(values1[i])}),
            axis2,
            values2,
            classes[i],
            resolution,
            cfg,
            integrator_config,
            signal_seed,
        )
        for i in range(axis1.count)
    )
    return RegionMap(axis1, axis2, tuple(classes), band_width, tuple(failures))


def _row_band_width(
    row_base: ModelParams,
    axis: AxisSpec,
    values: np.ndarray,
    row: tuple[ResponseClass | None, ...],
    resolution: float,
    cfg: MetricsConfig,
    integrator_config: IntegratorConfig | None,
    signal_seed: float,
) -> float | None:
    delayed = [j for j, c in enumerate(row) if c is ResponseClass.DELAYED]
    if not delayed:
        return None
    first, last = delayed[0], delayed[-1]

    def edge(j_out: int, j_in: int, fallback: float) -> float:
        if not 0 <= j_out < len(row) or row[j_out] is None:
            return fallback
        lo, hi = sorted((float(values[j_out]), float(values[j_in])))
        try:
            return find_threshold(
                row_base,
                axis.name,
                lo,
                hi,
                resolution,
                cfg,
                integrator_config,
                signal_seed=signal_seed,
            ).critical_value
        except (BracketError, IntegrationError) as exc:
            logger.warning("Band edge refinement failed: %s", exc)
            return fallback

    lower = edge(first - 1, first, float(values[first]))
    upper = edge(last + 1, last, float(values[last]))
    return upper - lower
