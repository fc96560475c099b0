"""Standalone SVG charts for trajectories and region maps."""

from __future__ import annotations

import html
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from icb_response.experiments import RegionMap
from icb_response.integrator import Trajectory
from icb_response.metrics import ResponseClass
from icb_response.models import STATE_COMPONENTS

logger = logging.getLogger(__name__)

SERIES_COLORS: dict[str, str] = {
    "C": "#d62728",
    "A": "#ff7f0e",
    "I": "#9467bd",
    "E": "#2ca02c",
    "S": "#1f77b4",
}
CLASS_COLORS: dict[ResponseClass, str] = {
    ResponseClass.NO_RESPONSE: "#bdbdbd",
    ResponseClass.QUICK_FULL: "#2ca02c",
    ResponseClass.QUICK_PARTIAL: "#1f77b4",
    ResponseClass.DELAYED: "#ff7f0e",
}
FAILED_COLOR = "#ffffff"

_MARGIN_LEFT = 80
_MARGIN_RIGHT = 150
_MARGIN_TOP = 50
_MARGIN_BOTTOM = 60


class EmptyPlotError(ValueError):
    """Raised when there is nothing to draw."""


@dataclass(frozen=True)
class PlotSpec:
    """What to draw and how.

    ``components`` selects trajectory series; region maps ignore it.
    ``t_range`` restricts the time axis to a window of the trajectory.
    """

    components: tuple[str, ...] = ("C",)
    log_y: bool = False
    title: str = ""
    x_label: str = "Time (days)"
    y_label: str = "Concentration"
    width: int = 800
    height: int = 480
    t_range: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "components", tuple(self.components))
        unknown = [c for c in self.components if c not in STATE_COMPONENTS]
        if unknown:
            raise ValueError(f"Unknown state component(s): {', '.join(unknown)}")
        if self.width <= _MARGIN_LEFT + _MARGIN_RIGHT or self.height <= (
            _MARGIN_TOP + _MARGIN_BOTTOM
        ):
            raise ValueError("Chart is too small for its margins")


def _text(
    x: float,
    y: float,
    content: str,
    anchor: str = "middle",
    font_size: int = 12,
    **attrs: str,
) -> str:
    extra = "".join(f' {k.replace("_", "-")}="{v}"' for k, v in attrs.items())
    return (
        f'<text x="{x:.2f}" y="{y:.2f}" text-anchor="{anchor}" '
        f'font-size="{font_size}" font-family="Arial"{extra}>'
        f"{html.escape(content)}</text>"
    )


def _tick(value: float) -> str:
    return f"{value:.4g}"


class _Canvas:
    """Pixel mapping and element list for one chart."""

    def __init__(self, spec: PlotSpec) -> None:
        self.spec = spec
        self.left = _MARGIN_LEFT
        self.right = spec.width - _MARGIN_RIGHT
        self.top = _MARGIN_TOP
        self.bottom = spec.height - _MARGIN_BOTTOM
        self.elements: list[str] = [
            f'<rect x="0" y="0" width="{spec.width}" height="{spec.height}" '
            'fill="#ffffff"/>'
        ]
        if spec.title:
            self.elements.append(
                _text(spec.width / 2, 28, spec.title, font_size=16)
            )

    def axes(self, x_label: str, y_label: str) -> None:
        self.elements.append(
            f'<line x1="{self.left}" y1="{self.bottom}" x2="{self.right}" '
            f'y2="{self.bottom}" stroke="#000000" stroke-width="1.5"/>'
        )
        self.elements.append(
            f'<line x1="{self.left}" y1="{self.top}" x2="{self.left}" '
            f'y2="{self.bottom}" stroke="#000000" stroke-width="1.5"/>'
        )
        mid_y = (self.top + self.bottom) / 2
        self.elements.append(
            _text((self.left + self.right) / 2, self.spec.height - 15, x_label)
        )
        self.elements.append(
            _text(20, mid_y, y_label, transform=f"rotate(-90 20 {mid_y:.2f})")
        )

    def x_ticks(self, lo: float, hi: float, to_px, count: int = 5) -> None:
        for value in np.linspace(lo, hi, count + 1):
            x = to_px(value)
            self.elements.append(
                f'<line x1="{x:.2f}" y1="{self.bottom}" x2="{x:.2f}" '
                f'y2="{self.bottom + 5}" stroke="#000000"/>'
            )
            self.elements.append(_text(x, self.bottom + 20, _tick(value)))

    def y_ticks(self, values, to_px) -> None:
        for value in values:
            y = to_px(value)
            self.elements.append(
                f'<line x1="{self.left - 5}" y1="{y:.2f}" x2="{self.left}" '
                f'y2="{y:.2f}" stroke="#000000"/>'
            )
            self.elements.append(_text(self.left - 8, y + 4, _tick(value), "end"))

    def legend_entry(self, index: int, label: str, color: str, swatch: str) -> None:
        x = self.right + 20
        y = self.top + 10 + index * 22
        if swatch == "line":
            self.elements.append(
                f'<line x1="{x}" y1="{y}" x2="{x + 24}" y2="{y}" '
                f'stroke="{color}" stroke-width="2.5"/>'
            )
        else:
            self.elements.append(
                f'<rect x="{x}" y="{y - 7}" width="24" height="14" '
                f'fill="{color}" stroke="#000000" stroke-width="0.5"/>'
            )
        self.elements.append(
            f'<g class="legend">{_text(x + 30, y + 4, label, "start")}</g>'
        )

    def render(self) -> bytes:
        spec = self.spec
        lines = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{spec.width}" '
            f'height="{spec.height}" viewBox="0 0 {spec.width} {spec.height}">',
            *self.elements,
            "</svg>",
        ]
        return ("\n".join(lines) + "\n").encode("utf-8")


def _trajectory_svg(traj: Trajectory, spec: PlotSpec) -> bytes:
    if not spec.components:
        raise EmptyPlotError("No components selected for plotting")
    times = traj.times
    window = np.ones(times.size, dtype=bool)
    if spec.t_range is not None:
        lo, hi = spec.t_range
        window = (times >= lo) & (times <= hi)
    if window.sum() < 1:
        raise EmptyPlotError("No samples fall inside the requested time range")
    times = times[window]
    series = {name: traj.component(name)[window] for name in spec.components}

    stacked = np.concatenate(list(series.values()))
    if spec.log_y:
        positive = stacked[stacked > 0]
        floor = float(positive.min()) if positive.size else 1e-12
        y_lo = 10 ** math.floor(math.log10(floor))
        y_hi = 10 ** math.ceil(math.log10(max(float(stacked.max()), y_lo * 10)))
        if y_hi <= y_lo:
            y_hi = y_lo * 10
        span = math.log10(y_hi) - math.log10(y_lo)

        def transform(v: np.ndarray) -> np.ndarray:
            return (np.log10(np.maximum(v, y_lo)) - math.log10(y_lo)) / span

        decades = range(round(math.log10(y_lo)), round(math.log10(y_hi)) + 1)
        y_tick_values = [10.0**d for d in decades]
    else:
        y_lo, y_hi = 0.0, float(stacked.max())
        if y_hi <= y_lo:
            y_hi = y_lo + 1.0
        y_hi *= 1.05

        def transform(v: np.ndarray) -> np.ndarray:
            return (v - y_lo) / (y_hi - y_lo)

        y_tick_values = list(np.linspace(y_lo, y_hi, 6))

    canvas = _Canvas(spec)
    t_lo, t_hi = float(times[0]), float(times[-1])
    t_span = t_hi - t_lo or 1.0

    def x_px(t):
        return canvas.left + (t - t_lo) / t_span * (canvas.right - canvas.left)

    def y_px(v):
        frac = transform(np.asarray(v, dtype=float))
        return canvas.bottom - frac * (canvas.bottom - canvas.top)

    canvas.axes(spec.x_label, spec.y_label + (" (log scale)" if spec.log_y else ""))
    canvas.x_ticks(t_lo, t_hi, x_px)
    canvas.y_ticks(y_tick_values, lambda v: float(y_px(v)))

    xs = x_px(times)
    for index, (name, values) in enumerate(series.items()):
        color = SERIES_COLORS[name]
        points = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, y_px(values)))
        canvas.elements.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
            f'points="{points}"/>'
        )
        canvas.legend_entry(index, name, color, "line")
    return canvas.render()


def _region_svg(region: RegionMap, spec: PlotSpec) -> bytes:
    rows, cols = region.axis1.count, region.axis2.count
    if rows == 0 or cols == 0:
        raise EmptyPlotError("Region map has no cells")
    canvas = _Canvas(spec)
    cell_w = (canvas.right - canvas.left) / cols
    cell_h = (canvas.bottom - canvas.top) / rows

    # axis2 runs along x, axis1 upwards along y
    for i, row in enumerate(region.classes):
        for j, cls in enumerate(row):
            color = CLASS_COLORS[cls] if cls is not None else FAILED_COLOR
            x = canvas.left + j * cell_w
            y = canvas.bottom - (i + 1) * cell_h
            canvas.elements.append(
                f'<rect class="cell" x="{x:.2f}" y="{y:.2f}" width="{cell_w:.2f}" '
                f'height="{cell_h:.2f}" fill="{color}" stroke="#ffffff" '
                'stroke-width="0.5"/>'
            )
    canvas.axes(region.axis2.name, region.axis1.name)

    def x_px(v):
        return canvas.left + (v - region.axis2.lo) / (
            (region.axis2.hi - region.axis2.lo) or 1.0
        ) * (canvas.right - canvas.left)

    def y_px(v):
        return canvas.bottom - (v - region.axis1.lo) / (
            (region.axis1.hi - region.axis1.lo) or 1.0
        ) * (canvas.bottom - canvas.top)

    canvas.x_ticks(region.axis2.lo, region.axis2.hi, x_px, count=4)
    canvas.y_ticks(np.linspace(region.axis1.lo, region.axis1.hi, 5), y_px)
    for index, (cls, color) in enumerate(CLASS_COLORS.items()):
        canvas.legend_entry(index, cls.value, color, "box")
    return canvas.render()


def emit_svg(source: Trajectory | RegionMap, spec: PlotSpec | None = None) -> bytes:
    """Render a trajectory (one polyline per component) or a region map.

    Raises:
        EmptyPlotError: If nothing would be drawn.
    """
    spec = spec or PlotSpec()
    if isinstance(source, RegionMap):
        return _region_svg(source, spec)
    if isinstance(source, Trajectory):
        return _trajectory_svg(source, spec)
    raise TypeError(f"Cannot plot {type(source).__name__}")


def write_svg(
    source: Trajectory | RegionMap, filepath: str | Path, spec: PlotSpec | None = None
) -> Path:
    """Write a chart to ``filepath`` and return the path."""
    filepath = Path(filepath)
    filepath.parent.mkdir(parents=True, exist_ok=True)
    filepath.write_bytes(emit_svg(source, spec))
    logger.info("Chart saved to %s", filepath)
    return filepath
