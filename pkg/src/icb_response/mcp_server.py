"""MCP server for checkpoint-blockade simulations.

Exposes tools and resources for AI assistants to run and classify the model.
"""

from __future__ import annotations

import json

from mcp.server.fastmcp import FastMCP

from icb_response.experiments import find_threshold
from icb_response.export import emit_report
from icb_response.integrator import IntegratorConfig, simulate
from icb_response.metrics import MetricsConfig, classify
from icb_response.models import (
    RESPONSE_TYPES,
    TREATMENTS,
    ModelParams,
    baseline_params,
    response_type_params,
    treatment_params,
)

# Initialize FastMCP server
mcp = FastMCP(
    "ICB Response",
    dependencies=["numpy", "scipy", "python-dotenv"],
)

# Longest horizon a tool call may request, in days.
MAX_HORIZON = 3650.0


def _resolve_params(setting: str, overrides: dict[str, float] | None) -> ModelParams:
    """Return the named setting's parameters with overrides applied."""
    if setting == "baseline":
        params = baseline_params()
    elif setting in RESPONSE_TYPES:
        params = response_type_params(setting)
    elif setting in TREATMENTS:
        params = treatment_params(setting)
    else:
        known = ", ".join(("baseline", *RESPONSE_TYPES, *TREATMENTS))
        raise ValueError(f"Unknown setting '{setting}'. Expected one of {known}.")
    return params.replace(**(overrides or {}))


def _clamp_horizon(horizon: float) -> float:
    return min(max(1.0, float(horizon)), MAX_HORIZON)


def _report(command: str, result: dict) -> str:
    return emit_report(command, result).decode("utf-8")


# ---------------------------------------------------------------------------
# Tools - Functions that AI assistants can call
# ---------------------------------------------------------------------------


@mcp.tool()
def simulate_summary(
    setting: str = "baseline",
    horizon: float = 365.0,
    overrides: dict[str, float] | None = None,
    every: float = 5.0,
) -> str:
    """Simulate the model and return a thinned trajectory.

    Args:
        setting: "baseline", a response type (no_response, quick_full,
                 quick_partial, delayed) or a treatment (no_treatment,
                 inhibitor_1, inhibitor_2, combination)
        horizon: Simulated days (1-3650)
        overrides: Parameter values to change, e.g. {"gamma": 37.4168}
        every: Spacing in days of the returned samples

    Returns:
        JSON report with the samples (t, C, A, I, E, S) and the final state
    """
    params = _resolve_params(setting, overrides)
    config = IntegratorConfig(output_dt=max(float(every), 0.05))
    traj = simulate(params, _clamp_horizon(horizon), config)
    traj.raise_for_status()
    samples = [
        {"t": t, **dict(zip(("C", "A", "I", "E", "S"), row))}
        for t, row in zip(traj.times.tolist(), traj.states.tolist())
    ]
    return _report(
        "simulate",
        {
            "setting": setting,
            "samples": samples,
            "final_state": traj.final_state.to_dict(),
        },
    )


@mcp.tool()
def classify_response(
    setting: str = "baseline",
    overrides: dict[str, float] | None = None,
    horizon: float = 3650.0,
) -> str:
    """Classify the response a parameter setting produces.

    Args:
        setting: Named parameter setting (see simulate_summary)
        overrides: Parameter values to change, e.g. {"beta": 0.0089988}
        horizon: Observation horizon in days (31-3650)

    Returns:
        JSON report with the class (NoResponse, QuickFull, QuickPartial,
        Delayed) and the delay length, dormancy length, post-treatment
        size, cycle period and effector window where they apply
    """
    params = _resolve_params(setting, overrides)
    cfg = MetricsConfig(horizon=max(_clamp_horizon(horizon), 31.0))
    traj = simulate(params, cfg.horizon)
    traj.raise_for_status()
    return _report("classify", classify(traj, cfg).to_dict())


@mcp.tool()
def find_critical_value(
    param: str = "gamma",
    lo: float = 37.40,
    hi: float = 37.45,
    resolution: float = 1e-4,
    setting: str = "baseline",
) -> str:
    """Locate where the response class changes along one parameter.

    Args:
        param: Model parameter to vary (e.g. "gamma" or "beta")
        lo: Lower end of the search bracket
        hi: Upper end of the search bracket (classes at lo and hi must differ)
        resolution: Final bracket width
        setting: Named parameter setting providing the other values

    Returns:
        JSON report with the critical value and the classes on either side
    """
    found = find_threshold(_resolve_params(setting, None), param, lo, hi, resolution)
    return _report("threshold", found.to_dict())


# ---------------------------------------------------------------------------
# Resources - Static or dynamic data that can be read
# ---------------------------------------------------------------------------


@mcp.resource("icb://params/baseline")
def get_baseline_params() -> str:
    """Get the baseline parameters (the two-month delayed response).

    Returns:
        JSON object mapping parameter names to values
    """
    return json.dumps(baseline_params().to_dict(), indent=2, sort_keys=True)


@mcp.resource("icb://params/{setting}")
def get_setting_params(setting: str) -> str:
    """Get the parameters of a named response type or treatment.

    Args:
        setting: A response type or treatment name

    Returns:
        JSON object mapping parameter names to values
    """
    params = _resolve_params(setting, None)
    return json.dumps(params.to_dict(), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# Prompts - Templates for generating LLM prompts
# ---------------------------------------------------------------------------


@mcp.prompt()
def explain_delay_prompt(setting: str = "baseline") -> str:
    """Generate a prompt explaining a delayed response.

    Args:
        setting: Named parameter setting to explain

    Returns:
        A prompt template for the LLM
    """
    return f"""Please explain the response of the '{setting}' setting to checkpoint \
blockade:

1. Classify it with the classify_response tool
2. If it is delayed, report the delay length and dormancy length in months
3. Describe how effector (E) and non-effector (S) T cells trade places around \
the response, using simulate_summary
4. Say whether a small change of gamma (PD-1) could abolish the response, \
using find_critical_value"""
