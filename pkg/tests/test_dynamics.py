"""Tests for the growth law and the right-hand side."""

import numpy as np
import pytest

from icb_response.dynamics import growth_rate, rhs, rhs_array
from icb_response.models import (
    StateVector,
    baseline_params,
    initial_state,
    response_type_params,
)


class TestGrowthRate:
    """Tests for the saturating growth law."""

    def test_saturates_at_r_max(self):
        assert growth_rate(0.0, baseline_params()) == 0.09

    def test_logistic_branch_near_capacity(self):
        params = baseline_params()
        assert growth_rate(950.0, params) == pytest.approx(0.05)
        assert growth_rate(1000.0, params) == 0.0

    def test_negative_above_capacity(self):
        assert growth_rate(1100.0, baseline_params()) == pytest.approx(-0.1)

    def test_branches_meet_at_kink(self):
        params = baseline_params()
        assert growth_rate(910.0, params) == pytest.approx(0.09)
        assert growth_rate(909.0, params) == 0.09
        assert growth_rate(911.0, params) < 0.09

    def test_continuous_and_capped(self):
        params = baseline_params()
        C = np.linspace(0.0, 1200.0, 2401)
        rates = np.array([growth_rate(c, params) for c in C])
        assert np.all(rates <= params.r_max)
        step_bound = params.r_C * 0.5 / params.C_star
        assert np.max(np.abs(np.diff(rates))) <= step_bound + 1e-15
        assert np.all(np.diff(rates[C >= 910.0]) <= 0.0)

    def test_unit_ceiling_never_binds_at_unit_rate(self):
        params = response_type_params("quick_partial")
        assert params.r_C == 1.0
        assert params.r_max == 1.0
        for C in np.linspace(0.0, params.C_star, 101):
            assert growth_rate(C, params) == pytest.approx(1.0 - C / params.C_star)


class TestRhs:
    """Tests for the five rate equations."""

    def test_tumour_escape_state(self):
        derivative = rhs(initial_state(baseline_params()), baseline_params())
        assert derivative.dC == 0.0
        assert derivative.dA == pytest.approx(0.5 * 1000 - 0.8)
        assert derivative.dI == pytest.approx(-3.0)
        assert derivative.dE == pytest.approx(5.0)
        assert derivative.dS == 0.0

    def test_effector_killing(self):
        params = baseline_params()
        state = StateVector(C=100.0, A=0.0, I=0.0, E=2.0, S=5.0)
        derivative = rhs(state, params)
        assert derivative.dC == pytest.approx(0.09 * 100 - 1.2 * 100 * 2.0)

    def test_switching_terms_cancel_in_t_cell_sum(self):
        params = baseline_params()
        rng = np.random.default_rng(7)
        for _ in range(50):
            C, A, I, E, S = rng.uniform(0.0, [1000, 700, 50, 10, 10])  # noqa: E741
            derivative = rhs(StateVector(C, A, I, E, S), params)
            assert derivative.t_cell_sum == pytest.approx(
                -(E + S - 10.0), rel=1e-9, abs=1e-9
            )

    def test_array_form_matches(self):
        params = baseline_params()
        state = StateVector(C=500.0, A=10.0, I=3.0, E=1.0, S=4.0)
        expected = rhs(state, params).as_array()
        assert np.allclose(rhs_array(state.as_array(), params), expected)

    def test_tabulated_escape_state(self):
        state = StateVector(C=1000.0, A=0.0, I=0.0, E=0.0, S=5.0)
        derivative = rhs(state, baseline_params())
        assert derivative.as_array() == pytest.approx([0.0, 500.0, 0.0, 5.0, 0.0])

    def test_signals_only(self):
        params = baseline_params().replace(r_E=0.7, E_star=4.0, S_star=6.0)
        derivative = rhs(StateVector(C=0.0, A=1.0, I=1.0, E=0.0, S=0.0), params)
        assert derivative.as_array() == pytest.approx([0.0, -0.8, -3.0, 2.8, 6.0])

    def test_suppression_at_base_levels(self):
        state = StateVector(C=0.0, A=0.0, I=0.0, E=5.0, S=5.0)
        derivative = rhs(state, baseline_params())
        assert derivative.dE == pytest.approx(-935.35)
        assert derivative.dS == pytest.approx(935.35)
        assert derivative.dC == derivative.dA == derivative.dI == 0.0

    def test_partial_equilibrium(self):
        params = baseline_params()
        A = params.r_A * params.C_star / params.delta_A
        state = StateVector(C=params.C_star, A=A, I=0.0, E=0.0, S=params.S_star)
        derivative = rhs(state, params)
        assert derivative.dC == 0.0
        assert derivative.dA == pytest.approx(0.0, abs=1e-12)

    def test_antigen_source_is_linear_in_cancer(self):
        params = baseline_params()
        single = rhs(StateVector(C=123.0, A=0.0, I=0.0, E=0.0, S=5.0), params)
        double = rhs(StateVector(C=246.0, A=0.0, I=0.0, E=0.0, S=5.0), params)
        assert double.dA == 2.0 * single.dA
