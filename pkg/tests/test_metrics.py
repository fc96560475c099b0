"""Tests for clinical quantities and response classification."""

import numpy as np
import pytest

from icb_response.integrator import Trajectory, simulate
from icb_response.metrics import (
    MetricsConfig,
    ResponseClass,
    ResponseReport,
    classify,
    cycle_period,
    cycle_periods,
    delay_length,
    dormancy_length,
    effector_window,
    evaluate_params,
    post_treatment_size,
    relapse_times,
)
from icb_response.models import (
    STATE_COMPONENTS,
    response_type_params,
    treatment_params,
)


def _make_trajectory(times, C, E=0.0, S=5.0) -> Trajectory:
    """Build a trajectory from cancer, effector and non-effector series."""
    times = np.asarray(times, dtype=float)
    columns = {
        "C": np.asarray(C, dtype=float),
        "A": np.zeros_like(times),
        "I": np.zeros_like(times),
        "E": np.broadcast_to(np.asarray(E, dtype=float), times.shape),
        "S": np.broadcast_to(np.asarray(S, dtype=float), times.shape),
    }
    return Trajectory(
        times=times, states=np.column_stack([columns[n] for n in STATE_COMPONENTS])
    )


def _piecewise(times, knots, levels):
    return np.interp(times, knots, levels)


class TestMetricsConfig:
    """Tests for MetricsConfig validation."""

    def test_defaults(self):
        cfg = MetricsConfig()
        assert cfg.response_frac == 0.5
        assert cfg.quick_cutoff == 30.0
        assert cfg.partial_band == (0.05, 0.95)
        assert cfg.horizon == 3650.0

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"eradication_frac": 0.1},
            {"partial_band": (0.9, 0.1)},
            {"response_frac": 1.0},
            {"quick_cutoff": 100.0, "horizon": 50.0},
            {"steadiness_window": 0.0},
        ],
    )
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ValueError):
            MetricsConfig(**kwargs)


class TestDelayLength:
    """Tests for delay_length."""

    def test_crossing_on_sample(self):
        times = np.arange(0.0, 100.5, 0.5)
        traj = _make_trajectory(times, np.maximum(1000.0 - 10.0 * times, 0.0))
        assert delay_length(traj, MetricsConfig()) == 50.0

    def test_no_response(self):
        times = np.arange(0.0, 100.5, 0.5)
        traj = _make_trajectory(times, np.full_like(times, 1000.0))
        assert delay_length(traj, MetricsConfig()) is None

    def test_beyond_horizon(self):
        times = np.arange(0.0, 100.5, 0.5)
        traj = _make_trajectory(times, np.maximum(1000.0 - 10.0 * times, 0.0))
        assert delay_length(traj, MetricsConfig(horizon=40.0)) is None

    def test_relative_to_start_time(self):
        times = np.arange(10.0, 110.5, 0.5)
        traj = _make_trajectory(times, np.maximum(1000.0 - 10.0 * (times - 10), 0.0))
        assert delay_length(traj, MetricsConfig()) == 50.0


class TestDormancyAndCycles:
    """Tests for dormancy_length, relapse_times and cycle periods."""

    def test_dormancy(self):
        times = np.arange(0.0, 200.5, 0.5)
        C = _piecewise(
            times, [0, 10, 20, 100, 110, 200], [1000, 1000, 1, 1, 1000, 1000]
        )
        traj = _make_trajectory(times, C)
        start = 10.0 + 990.0 / 99.9
        end = 100.0 + 499.0 / 99.9
        dormancy = dormancy_length(traj, MetricsConfig())
        assert dormancy == pytest.approx(end - start, abs=1e-3)

    def test_no_relapse(self):
        times = np.arange(0.0, 200.5, 0.5)
        C = _piecewise(times, [0, 10, 20, 200], [1000, 1000, 1, 1])
        assert dormancy_length(_make_trajectory(times, C), MetricsConfig()) is None

    def test_never_suppressed(self):
        times = np.arange(0.0, 200.5, 0.5)
        C = _piecewise(times, [0, 10, 20, 200], [1000, 1000, 100, 100])
        assert dormancy_length(_make_trajectory(times, C), MetricsConfig()) is None

    def test_cycles(self):
        times = np.arange(0.0, 200.5, 0.5)
        C = np.where(np.mod(times, 50.0) < 25.0, 1000.0, 0.0)
        traj = _make_trajectory(times, C)
        cfg = MetricsConfig()
        assert cycle_periods(traj, cfg) == pytest.approx([50.0, 50.0, 50.0])
        assert cycle_period(traj, cfg) == pytest.approx(50.0)
        assert relapse_times(traj, cfg) == pytest.approx([49.75, 99.75, 149.75, 199.75])

    def test_single_response_has_no_period(self):
        times = np.arange(0.0, 100.5, 0.5)
        traj = _make_trajectory(times, np.maximum(1000.0 - 10.0 * times, 0.0))
        assert cycle_period(traj, MetricsConfig()) is None


class TestPostTreatmentSize:
    """Tests for post_treatment_size."""

    def test_stable_intermediate_size(self):
        times = np.arange(0.0, 400.5, 0.5)
        C = _piecewise(times, [0, 10, 400], [1000, 300, 300])
        assert post_treatment_size(_make_trajectory(times, C), MetricsConfig()) == 300.0

    def test_oscillating_size(self):
        times = np.arange(0.0, 400.5, 0.5)
        C = 300.0 + 100.0 * np.sin(times / 5.0)
        assert post_treatment_size(_make_trajectory(times, C), MetricsConfig()) is None

    def test_outside_partial_band(self):
        times = np.arange(0.0, 400.5, 0.5)
        C = _piecewise(times, [0, 10, 400], [1000, 1, 1])
        assert post_treatment_size(_make_trajectory(times, C), MetricsConfig()) is None


class TestEffectorWindow:
    """Tests for effector_window."""

    def test_single_window(self):
        times = np.arange(0.0, 20.0, 0.0625)
        E = _piecewise(times, [0, 10, 10.5, 11, 11.5, 20], [0, 0, 8, 8, 0, 0])
        traj = _make_trajectory(times, np.full_like(times, 1000.0), E=E, S=10.0 - E)
        assert effector_window(traj, MetricsConfig()) == pytest.approx(0.875, abs=1e-3)

    def test_no_window(self):
        times = np.arange(0.0, 20.0, 0.5)
        traj = _make_trajectory(times, np.full_like(times, 1000.0))
        assert effector_window(traj, MetricsConfig()) is None

    def test_open_window_runs_to_end(self):
        times = np.arange(0.0, 20.5, 0.5)
        E = _piecewise(times, [0, 10, 20], [0, 10, 10])
        traj = _make_trajectory(times, np.full_like(times, 1000.0), E=E, S=10.0 - E)
        assert effector_window(traj, MetricsConfig()) == pytest.approx(15.0, abs=1e-3)


class TestClassify:
    """Tests for classify on constructed trajectories."""

    def _times(self):
        return np.arange(0.0, 400.5, 0.5)

    def test_no_response(self):
        times = self._times()
        traj = _make_trajectory(times, np.full_like(times, 1000.0))
        report = classify(traj, MetricsConfig())
        assert report.response_class is ResponseClass.NO_RESPONSE
        assert report.delay_length is None

    def test_quick_full(self):
        times = self._times()
        C = _piecewise(times, [0, 10, 400], [1000, 0.5, 0.5])
        report = classify(_make_trajectory(times, C), MetricsConfig())
        assert report.response_class is ResponseClass.QUICK_FULL
        assert report.delay_length < 30.0

    def test_quick_partial(self):
        times = self._times()
        C = _piecewise(times, [0, 10, 400], [1000, 300, 300])
        report = classify(_make_trajectory(times, C), MetricsConfig())
        assert report.response_class is ResponseClass.QUICK_PARTIAL
        assert report.post_treatment_size == 300.0

    def test_delayed(self):
        times = self._times()
        C = _piecewise(times, [0, 60, 70, 400], [1000, 1000, 1, 1])
        report = classify(_make_trajectory(times, C), MetricsConfig())
        assert report.response_class is ResponseClass.DELAYED
        assert report.delay_length == pytest.approx(60.0 + 500.0 / 99.9, abs=1e-3)

    def test_to_dict(self):
        report = ResponseReport(ResponseClass.DELAYED, delay_length=61.5)
        data = report.to_dict()
        assert data["class"] == "Delayed"
        assert data["delay_length"] == 61.5
        assert data["post_treatment_size"] is None


class TestModelResponses:
    """Classification of simulated runs."""

    def test_evaluate_params_no_response(self):
        params = response_type_params("no_response")
        report = evaluate_params(params, MetricsConfig(horizon=40.0))
        assert report.response_class is ResponseClass.NO_RESPONSE

    @pytest.mark.slow
    def test_baseline_delay_and_dormancy(self, baseline_run, long_metrics):
        report = classify(baseline_run, long_metrics)
        assert report.response_class is ResponseClass.DELAYED
        assert 45.0 <= report.delay_length <= 75.0
        assert 120.0 <= report.dormancy_length <= 240.0
        assert report.effector_window < 2.0

    @pytest.mark.slow
    def test_effector_cells_overtake_only_at_the_response(
        self, baseline_run, long_metrics
    ):
        report = classify(baseline_run, long_metrics)
        delay, dormancy = report.delay_length, report.dormancy_length
        times = baseline_run.times
        gap = baseline_run.component("E") - baseline_run.component("S")
        before = times < delay - 10.0
        during_dormancy = (times > delay + 10.0) & (times < delay + 0.5 * dormancy)
        assert np.all(gap[before] < 0.0)
        assert np.all(gap[during_dormancy] < 0.0)
        assert abs(times[np.argmax(gap)] - delay) < 10.0
        assert gap.max() > 0.0

    @pytest.mark.slow
    def test_baseline_run_has_no_negative_states(self, baseline_run):
        assert np.all(baseline_run.states >= 0.0)
        assert baseline_run.ok

    @pytest.mark.slow
    @pytest.mark.parametrize(
        ("kind", "expected"),
        [
            ("no_response", ResponseClass.NO_RESPONSE),
            ("quick_full", ResponseClass.QUICK_FULL),
            pytest.param(
                "quick_partial",
                ResponseClass.QUICK_PARTIAL,
                marks=pytest.mark.xfail(
                    reason=(
                        "r_max = 1 never binds while r_C = 1, so this row runs "
                        "like inhibitor_2 and responds after a delay"
                    ),
                    strict=True,
                ),
            ),
            ("delayed", ResponseClass.DELAYED),
        ],
    )
    def test_response_type_table(self, kind, expected):
        report = evaluate_params(response_type_params(kind), MetricsConfig())
        assert report.response_class is expected

    @pytest.mark.slow
    def test_treatment_delays_show_synergy(self, long_metrics):
        delays = {
            kind: evaluate_params(treatment_params(kind), long_metrics).delay_length
            for kind in ("inhibitor_1", "inhibitor_2", "combination")
        }
        assert delays["combination"] < delays["inhibitor_2"] < delays["inhibitor_1"]
        assert delays["inhibitor_1"] == pytest.approx(150.0, rel=0.25)
        assert delays["inhibitor_2"] == pytest.approx(120.0, rel=0.25)
        assert delays["combination"] == pytest.approx(60.0, rel=0.25)

    @pytest.mark.slow
    def test_cyclic_relapse(self):
        cfg = MetricsConfig(horizon=1095.0)
        traj = simulate(response_type_params("delayed"), cfg.horizon)
        periods = cycle_periods(traj, cfg)
        assert len(periods) >= 2
        assert max(periods) / min(periods) <= 1.05
