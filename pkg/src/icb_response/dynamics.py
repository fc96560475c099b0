"""Right-hand side of the tumour-immune ODE system and the growth law."""

from __future__ import annotations

import numpy as np

from icb_response.models import ModelParams, StateDerivative, StateVector


def growth_rate(C: float, params: ModelParams) -> float:
    """Return the saturating cancer growth rate f(C) in 1/day.

    f(C) = min{r_C (1 - C/C_star), r_max}. The logistic branch is negative
    above C_star and is not clamped.
    """
    return min(params.r_C * (1.0 - C / params.C_star), params.r_max)


def rhs_array(y: np.ndarray, params: ModelParams) -> np.ndarray:
    """Evaluate the system on an array ordered (C, A, I, E, S).

    This is the form the integrator calls on every stage.
    """
    C, A, I, E, S = y.tolist()  # noqa: E741
    activation = params.beta * A * I * E * S
    suppression = params.gamma * E * S
    return np.array(
        [
            growth_rate(C, params) * C - params.kappa * C * E,
            params.r_A * C - params.delta_A * A,
            params.r_I * C * E - params.delta_I * I,
            -params.r_E * (E - params.E_star) + activation - suppression,
            -params.r_S * (S - params.S_star) - activation + suppression,
        ]
    )


def rhs(state: StateVector, params: ModelParams) -> StateDerivative:
    """Return the time derivative of ``state`` under ``params``."""
    return StateDerivative(*(float(v) for v in rhs_array(state.as_array(), params)))
