"""Data models for the checkpoint-blockade tumour-immune system.

The five state variables are cancer (C), antigen presentation (A),
inflammation (I), effector T cells (E) and non-effector T cells (S).
Units are fixed: cells/nL, peptides/nL, ng/nL and days.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

STATE_COMPONENTS: tuple[str, ...] = ("C", "A", "I", "E", "S")


def _check_finite_nonnegative(owner: str, name: str, value: float) -> None:
    if not math.isfinite(value) or value < 0:
        raise ValueError(f"{owner}.{name} must be finite and >= 0, got {value!r}")


@dataclass(frozen=True)
class ModelParams:
    """The fourteen rate and scale constants of the model.

    ``beta`` is the effector recruitment coefficient (CTLA-4 proxy) and
    ``gamma`` the effector suppression coefficient (PD-1 proxy).
    """

    r_C: float
    r_max: float
    C_star: float
    kappa: float
    r_A: float
    delta_A: float
    r_I: float
    delta_I: float
    r_E: float
    E_star: float
    r_S: float
    S_star: float
    beta: float
    gamma: float

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValueError(
                    f"ModelParams.{f.name} must be a number, got {value!r}"
                )
            _check_finite_nonnegative("ModelParams", f.name, float(value))
        if self.C_star <= 0:
            raise ValueError(f"ModelParams.C_star must be > 0, got {self.C_star!r}")

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        """Return the parameter names in declaration order."""
        return tuple(f.name for f in fields(cls))

    def replace(self, **changes: float) -> ModelParams:
        """Return a validated copy with some fields changed.

        Raises:
            ValueError: If a name is not a parameter or a value is invalid.
        """
        unknown = set(changes) - set(self.field_names())
        if unknown:
            names = ", ".join(sorted(unknown))
            raise ValueError(f"Unknown model parameter(s): {names}")
        return replace(self, **changes)

    def scaled(self, name: str, factor: float) -> ModelParams:
        """Return a copy with ``name`` multiplied by ``factor``."""
        return self.replace(**{name: getattr(self, name) * factor})

    def to_dict(self) -> dict:
        """Convert the parameters to a plain dictionary."""
        return asdict(self)


@dataclass(frozen=True)
class StateVector:
    """Instantaneous values of (C, A, I, E, S)."""

    C: float
    A: float
    I: float  # noqa: E741
    E: float
    S: float

    def __post_init__(self) -> None:
        for name in STATE_COMPONENTS:
            _check_finite_nonnegative("StateVector", name, float(getattr(self, name)))

    def as_array(self) -> np.ndarray:
        """Return the state as a float array ordered (C, A, I, E, S)."""
        return np.array([self.C, self.A, self.I, self.E, self.S], dtype=float)

    @classmethod
    def from_array(cls, values: np.ndarray) -> StateVector:
        """Build a state from an array ordered (C, A, I, E, S)."""
        return cls(*(float(v) for v in values))

    def replace(self, **changes: float) -> StateVector:
        """Return a validated copy with some components changed."""
        unknown = set(changes) - set(STATE_COMPONENTS)
        if unknown:
            names = ", ".join(sorted(unknown))
            raise ValueError(f"Unknown state component(s): {names}")
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class StateDerivative:
    """Per-day rates of change of each state component."""

    dC: float
    dA: float
    dI: float
    dE: float
    dS: float

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value):
                raise ValueError(f"StateDerivative.{f.name} is not finite: {value!r}")

    @property
    def t_cell_sum(self) -> float:
        """dE + dS, where the recruitment and suppression terms cancel."""
        return self.dE + self.dS

    def as_array(self) -> np.ndarray:
        return np.array([self.dC, self.dA, self.dI, self.dE, self.dS], dtype=float)


def baseline_params() -> ModelParams:
    """Return the baseline parameter estimates (the two-month delay case).

    ``r_C`` is recorded as 1.0/day. Running ``calibration.resolve_rc``
    compares it with the alternative value of 30/day; the baseline
    delayed response is reproduced by 1.0.
    """
    return ModelParams(
        r_C=1.0,
        r_max=0.09,
        C_star=1000.0,
        kappa=1.2,
        r_A=0.5,
        delta_A=0.8,
        r_I=0.4,
        delta_I=3.0,
        r_E=1.0,
        E_star=5.0,
        r_S=1.0,
        S_star=5.0,
        beta=0.009,
        gamma=37.414,
    )


def initial_state(params: ModelParams, signal_seed: float = 1.0) -> StateVector:
    """Return the tumour-escape initial state.

    The cancer sits at its steady state, effector cells are absent and
    non-effector cells are at their base level. Antigen and inflammation
    start at ``signal_seed`` (use 0.0 for the tabulated values).

    Raises:
        ValueError: If ``signal_seed`` is negative or not finite.
    """
    if not math.isfinite(signal_seed) or signal_seed < 0:
        raise ValueError(f"signal_seed must be finite and >= 0, got {signal_seed!r}")
    return StateVector(
        C=params.C_star,
        A=signal_seed,
        I=signal_seed,
        E=0.0,
        S=params.S_star,
    )


# (beta, gamma, E_star, r_max) for each qualitative response type.
_RESPONSE_TYPES: dict[str, tuple[float, float, float, float]] = {
    "no_response": (0.0089988, 37.4168, 5.0, 0.09),
    "quick_full": (0.009, 37.4168, 5.5, 0.09),
    "quick_partial": (0.0089988, 37.414, 5.0, 1.0),
    "delayed": (0.009, 37.414, 5.0, 0.09),
}

# (beta, gamma) for each delayed-response treatment setting.
_TREATMENTS: dict[str, tuple[float, float]] = {
    "no_treatment": (0.0089988, 37.4168),
    "inhibitor_1": (0.009, 37.4168),
    "inhibitor_2": (0.0089988, 37.414),
    "combination": (0.009, 37.414),
}

RESPONSE_TYPES: tuple[str, ...] = tuple(_RESPONSE_TYPES)
TREATMENTS: tuple[str, ...] = tuple(_TREATMENTS)


def response_type_params(
    kind: str, base: ModelParams | None = None
) -> ModelParams:
    """Return the parameter set generating one of the four response types.

    The ``quick_partial`` row raises r_max to 1.0, which only caps growth
    when r_C exceeds 1.0. With the recorded r_C = 1.0 the row therefore
    behaves like ``inhibitor_2`` and responds after a delay.

    Args:
        kind: One of ``RESPONSE_TYPES``.
        base: Parameters to start from (default: baseline).
    """
    if kind not in _RESPONSE_TYPES:
        raise ValueError(
            f"Unknown response type '{kind}'. "
            f"Expected one of {', '.join(RESPONSE_TYPES)}."
        )
    beta, gamma, e_star, r_max = _RESPONSE_TYPES[kind]
    return (base or baseline_params()).replace(
        beta=beta, gamma=gamma, E_star=e_star, r_max=r_max
    )


def treatment_params(kind: str, base: ModelParams | None = None) -> ModelParams:
    """Return the (beta, gamma) setting of a delayed-response treatment.

    ``inhibitor_1`` models a CTLA-4 blockade alone, ``inhibitor_2`` a PD-1
    blockade alone and ``combination`` both.
    """
    if kind not in _TREATMENTS:
        raise ValueError(
            f"Unknown treatment '{kind}'. Expected one of {', '.join(TREATMENTS)}."
        )
    beta, gamma = _TREATMENTS[kind]
    return (base or baseline_params()).replace(beta=beta, gamma=gamma)
