"""Command-line interface: simulate, classify and analyse checkpoint-blockade runs."""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Callable
from pathlib import Path

from icb_response.calibration import FitSpec, fit_delay, resolve_rc
from icb_response.charts import PlotSpec, write_svg
from icb_response.config import (
    RunConfig,
    get_log_level,
    get_output_dir,
    get_workers,
    load_config,
)
from icb_response.dosing import DoseSchedule, default_schedule, simulate_with_doses
from icb_response.experiments import (
    AxisSpec,
    find_threshold,
    oat_sensitivity,
    region_map,
)
from icb_response.export import write_csv, write_report
from icb_response.integrator import Trajectory, integrate
from icb_response.metrics import classify
from icb_response.models import STATE_COMPONENTS, ModelParams

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1


# ---------------------------------------------------------------------------
# CLI argument parsing
# ---------------------------------------------------------------------------


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config",
        help="Run-configuration file (key = value; see Docs/Configuration.md).",
    )
    common.add_argument(
        "-o",
        "--out",
        help="Output directory (default: $ICB_OUTPUT_DIR or 'output/').",
    )
    common.add_argument(
        "--svg",
        action="store_true",
        help="Also write an SVG chart.",
    )
    common.add_argument(
        "--plot",
        default="C",
        help="Comma-separated components to chart (default: 'C'); 'all' for every one.",
    )
    common.add_argument(
        "--log-y",
        action="store_true",
        help="Use a logarithmic y-axis for trajectory charts.",
    )
    common.add_argument(
        "-v",
        "--verbose",
        action="store_true",
        help="Log debug detail.",
    )
    return common


def _build_parser() -> argparse.ArgumentParser:
    """Build and return the CLI argument parser."""
    parser = argparse.ArgumentParser(
        prog="icb-response",
        description="Simulate delayed responses to immune checkpoint blockade.",
    )
    common = _common_options()
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser(
        "simulate",
        parents=[common],
        help="Integrate the model and write the trajectory as CSV.",
    )
    sub.add_parser(
        "classify",
        parents=[common],
        help="Classify the response and report its clinical quantities.",
    )

    sensitivity = sub.add_parser(
        "sensitivity",
        parents=[common],
        help="One-at-a-time sensitivity of delay and dormancy.",
    )
    sensitivity.add_argument(
        "--frac",
        type=float,
        default=0.01,
        help="Relative perturbation of each parameter (default: 0.01).",
    )
    sensitivity.add_argument(
        "--workers",
        type=int,
        help="Worker processes (default: $ICB_WORKERS or 1).",
    )

    threshold = sub.add_parser(
        "threshold",
        parents=[common],
        help="Locate the class boundary of one parameter by bisection.",
    )
    threshold.add_argument("param", help="Model parameter, e.g. 'gamma'.")
    threshold.add_argument("lo", type=float, help="Lower end of the bracket.")
    threshold.add_argument("hi", type=float, help="Upper end of the bracket.")
    threshold.add_argument(
        "--resolution",
        type=float,
        default=1e-4,
        help="Final bracket width (default: 1e-4).",
    )

    sweep = sub.add_parser(
        "sweep",
        parents=[common],
        help="Classify a two-parameter grid (a region map).",
    )
    sweep.add_argument(
        "--axis",
        action="append",
        required=True,
        metavar="NAME:LO:HI:COUNT",
        help="Grid axis; give exactly two.",
    )
    sweep.add_argument(
        "--resolution",
        type=float,
        help="Band-edge refinement resolution along the second axis.",
    )
    sweep.add_argument(
        "--workers",
        type=int,
        help="Worker processes (default: $ICB_WORKERS or 1).",
    )

    fit = sub.add_parser(
        "fit",
        parents=[common],
        help="Fit parameters to a target delay length.",
    )
    fit.add_argument(
        "--free",
        nargs="+",
        default=["beta", "gamma"],
        help="Free parameters (default: beta gamma).",
    )
    fit.add_argument(
        "--bounds",
        action="append",
        default=[],
        metavar="NAME:LO:HI",
        help="Bounds of a free parameter (defaults exist for beta and gamma).",
    )
    fit.add_argument(
        "--target",
        type=float,
        default=60.0,
        help="Target delay length in days (default: 60).",
    )
    fit.add_argument("--max-evals", type=int, default=500, help="Simulation budget.")
    fit.add_argument(
        "--tol-days", type=float, default=1.0, help="Accepted delay error in days."
    )

    dose = sub.add_parser(
        "dose",
        parents=[common],
        help="Simulate a dosing schedule of checkpoint blockades.",
    )
    dose.add_argument(
        "--dose",
        action="append",
        default=[],
        metavar="T:DBETA:DGAMMA",
        help="One dose; repeat for a schedule.",
    )
    dose.add_argument(
        "--default-schedule",
        nargs=2,
        type=float,
        metavar=("DBETA", "DGAMMA"),
        help="Four doses of the given size three weeks apart.",
    )
    dose.add_argument(
        "--no-project",
        action="store_true",
        help="Skip the projected class of each journey snapshot.",
    )

    sub.add_parser(
        "resolve-rc",
        parents=[common],
        help="Compare candidate growth rates against the published delays.",
    )
    return parser


def _parse_axis(text: str) -> AxisSpec:
    parts = text.split(":")
    if len(parts) != 4:
        raise ValueError(f"Axis '{text}' must have the form NAME:LO:HI:COUNT")
    name, lo, hi, count = parts
    try:
        return AxisSpec(name, float(lo), float(hi), int(count))
    except ValueError as exc:
        raise ValueError(f"Axis '{text}': {exc}") from None


def _parse_bounds(items: list[str]) -> dict[str, tuple[float, float]]:
    bounds = {}
    for text in items:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"Bounds '{text}' must have the form NAME:LO:HI")
        try:
            bounds[parts[0]] = (float(parts[1]), float(parts[2]))
        except ValueError:
            raise ValueError(f"Bounds '{text}' contain a non-numeric value") from None
    return bounds


def _plot_spec(args: argparse.Namespace, title: str) -> PlotSpec:
    if args.plot.strip().lower() == "all":
        components = STATE_COMPONENTS
    else:
        components = tuple(c.strip() for c in args.plot.split(",") if c.strip())
    return PlotSpec(components=components, log_y=args.log_y, title=title)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _run(config: RunConfig, params: ModelParams | None = None) -> Trajectory:
    traj = integrate(
        params or config.params, config.initial, 0.0, config.horizon, config.integrator
    )
    traj.raise_for_status()
    return traj


def cmd_simulate(config: RunConfig, args: argparse.Namespace, out: Path) -> dict:
    traj = _run(config)
    write_csv(traj, out / "trajectory.csv")
    if args.svg:
        write_svg(traj, out / "trajectory.svg", _plot_spec(args, "Simulated run"))
    stats = traj.step_stats
    result = {
        "samples": len(traj),
        "t_end": traj.t_end,
        "termination": traj.termination.value,
        "accepted_steps": stats.accepted,
        "rejected_steps": stats.rejected,
        "clamped_steps": stats.clamped,
        "final_state": traj.final_state.to_dict(),
        "config": config.to_dict(),
    }
    write_report("simulate", result, out / "simulate.json")
    return result


def cmd_classify(config: RunConfig, args: argparse.Namespace, out: Path) -> dict:
    traj = _run(config)
    report = classify(traj, config.metrics)
    if args.svg:
        title = f"Response: {report.response_class.value}"
        write_svg(traj, out / "classify.svg", _plot_spec(args, title))
    result = report.to_dict()
    write_report("classify", result, out / "classify.json")
    return result


def cmd_sensitivity(config: RunConfig, args: argparse.Namespace, out: Path) -> dict:
    rows = oat_sensitivity(
        config.params,
        args.frac,
        config.metrics,
        config.integrator,
        signal_seed=config.signal_seed,
        workers=args.workers or get_workers(),
    )
    result = {"rows": [row.to_dict() for row in rows]}
    write_report("sensitivity", result, out / "sensitivity.json")
    return result


def cmd_threshold(config: RunConfig, args: argparse.Namespace, out: Path) -> dict:
    found = find_threshold(
        config.params,
        args.param,
        args.lo,
        args.hi,
        args.resolution,
        config.metrics,
        config.integrator,
        signal_seed=config.signal_seed,
    )
    result = found.to_dict()
    write_report("threshold", result, out / "threshold.json")
    return result


def cmd_sweep(config: RunConfig, args: argparse.Namespace, out: Path) -> dict:
    if len(args.axis) != 2:
        raise ValueError(
            f"sweep needs exactly two --axis options, got {len(args.axis)}"
        )
    axis1, axis2 = (_parse_axis(a) for a in args.axis)
    region = region_map(
        config.params,
        axis1,
        axis2,
        config.metrics,
        config.integrator,
        resolution=args.resolution,
        signal_seed=config.signal_seed,
        workers=args.workers or get_workers(),
    )
    if args.svg:
        write_svg(region, out / "sweep.svg", PlotSpec(title="Response regions"))
    result = region.to_dict()
    write_report("sweep", result, out / "sweep.json")
    return result


def cmd_fit(config: RunConfig, args: argparse.Namespace, out: Path) -> dict:
    spec = FitSpec(
        free_params=tuple(args.free),
        target_delay=args.target,
        bounds=_parse_bounds(args.bounds),
        max_evals=args.max_evals,
        tol_days=args.tol_days,
    )
    fitted = fit_delay(
        spec,
        config.params,
        config.metrics,
        config.integrator,
        signal_seed=config.signal_seed,
    )
    result = fitted.to_dict()
    write_report("fit", result, out / "fit.json")
    return result


def cmd_dose(config: RunConfig, args: argparse.Namespace, out: Path) -> dict:
    if args.default_schedule is not None and args.dose:
        raise ValueError("Use either --dose or --default-schedule, not both")
    if args.default_schedule is not None:
        schedule = default_schedule(*args.default_schedule)
    else:
        schedule = DoseSchedule.parse(args.dose)
    traj, journey = simulate_with_doses(
        config.params,
        config.initial,
        schedule,
        config.horizon,
        config.integrator,
        config.metrics,
        project=not args.no_project,
    )
    write_csv(traj, out / "trajectory.csv")
    if args.svg:
        write_svg(traj, out / "dose.svg", _plot_spec(args, "Dosed run"))
    result = {"schedule": schedule.to_dict(), **journey.to_dict()}
    write_report("dose", result, out / "dose.json")
    return result


def cmd_resolve_rc(config: RunConfig, args: argparse.Namespace, out: Path) -> dict:
    report = resolve_rc(
        cfg=config.metrics,
        integrator_config=config.integrator,
        base=config.params,
        signal_seed=config.signal_seed,
    )
    result = report.to_dict()
    write_report("resolve-rc", result, out / "resolve-rc.json")
    return result


COMMANDS: dict[str, Callable[[RunConfig, argparse.Namespace, Path], dict]] = {
    "simulate": cmd_simulate,
    "classify": cmd_classify,
    "sensitivity": cmd_sensitivity,
    "threshold": cmd_threshold,
    "sweep": cmd_sweep,
    "fit": cmd_fit,
    "dose": cmd_dose,
    "resolve-rc": cmd_resolve_rc,
}


# ---------------------------------------------------------------------------
# Terminal summary
# ---------------------------------------------------------------------------


def _print_summary(command: str, result: dict, out: Path) -> None:
    """Print the headline numbers of a command to stdout."""
    print(f"\n{'=' * 64}")
    print(f"  {command}: results in {out}")
    print(f"{'=' * 64}\n")
    for key in sorted(result):
        value = result[key]
        if isinstance(value, float):
            print(f"  {key}: {value:.12g}")
        elif isinstance(value, (str, int)) or value is None:
            print(f"  {key}: {value}")
    print()


# ---------------------------------------------------------------------------
# Main entry point
# ---------------------------------------------------------------------------


def main(argv: list[str] | None = None) -> int:
    """Run one command and return the process exit status."""
    args = _build_parser().parse_args(argv)
    try:
        level = logging.DEBUG if args.verbose else get_log_level()
    except ValueError as exc:
        print(f"icb-response: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    logging.basicConfig(
        level=level,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    )
    out = Path(args.out) if args.out else get_output_dir()
    try:
        config = load_config(args.config)
        logger.info("Running '%s' with horizon %g days", args.command, config.horizon)
        result = COMMANDS[args.command](config, args, out)
    except (ValueError, RuntimeError, OSError) as exc:
        logger.error("%s failed: %s", args.command, exc)
        print(f"icb-response {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    _print_summary(args.command, result, out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
