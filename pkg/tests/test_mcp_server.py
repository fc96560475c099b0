"""Tests for the MCP tools, resources and prompts."""

from __future__ import annotations

import json

import pytest

from icb_response import mcp_main
from icb_response.mcp_server import (
    classify_response,
    explain_delay_prompt,
    find_critical_value,
    get_baseline_params,
    get_setting_params,
    mcp,
    simulate_summary,
)
from icb_response.metrics import ResponseClass, ResponseReport


def _fake_evaluate(params, cfg, integrator_config=None, signal_seed=1.0):
    if params.gamma >= 37.42:
        return ResponseReport(ResponseClass.NO_RESPONSE)
    return ResponseReport(ResponseClass.DELAYED, delay_length=60.0)


class TestTools:
    """Tests for the MCP tools."""

    def test_simulate_summary(self):
        data = json.loads(simulate_summary(horizon=2.0, every=0.5))
        assert data["command"] == "simulate"
        samples = data["result"]["samples"]
        assert [s["t"] for s in samples] == [0.0, 0.5, 1.0, 1.5, 2.0]
        assert samples[0]["C"] == 1000.0
        assert set(data["result"]["final_state"]) == {"C", "A", "I", "E", "S"}

    def test_horizon_is_clamped(self):
        data = json.loads(simulate_summary(horizon=0.0, every=0.5))
        assert data["result"]["samples"][-1]["t"] == 1.0

    def test_overrides(self):
        data = json.loads(simulate_summary(horizon=1.0, overrides={"C_star": 500.0}))
        assert data["result"]["samples"][0]["C"] == 500.0

    def test_unknown_setting(self):
        with pytest.raises(ValueError, match="Unknown setting"):
            simulate_summary(setting="placebo")

    def test_classify_response(self):
        data = json.loads(classify_response(setting="no_treatment", horizon=31.0))
        assert data["command"] == "classify"
        assert data["result"]["class"] == "NoResponse"

    def test_find_critical_value(self, monkeypatch):
        monkeypatch.setattr("icb_response.experiments.evaluate_params", _fake_evaluate)
        data = json.loads(find_critical_value(lo=37.41, hi=37.43, resolution=1e-6))
        assert data["result"]["critical_value"] == pytest.approx(37.42, abs=1e-6)


class TestResources:
    """Tests for the MCP resources."""

    def test_baseline(self):
        params = json.loads(get_baseline_params())
        assert params["beta"] == 0.009
        assert params["gamma"] == 37.414

    def test_named_setting(self):
        params = json.loads(get_setting_params("inhibitor_1"))
        assert params["gamma"] == 37.4168


class TestPrompts:
    """Tests for the MCP prompts."""

    def test_explain_delay_prompt(self):
        prompt = explain_delay_prompt("combination")
        assert "'combination'" in prompt
        assert "classify_response" in prompt


class TestEntryPoint:
    """Tests for the icb-response-mcp entry point."""

    @pytest.fixture
    def runs(self, monkeypatch):
        calls = []
        monkeypatch.setattr(mcp, "run", lambda **kwargs: calls.append(kwargs))
        monkeypatch.delenv("ICB_MCP_TRANSPORT", raising=False)
        monkeypatch.delenv("ICB_LOG_LEVEL", raising=False)
        return calls

    def test_defaults_to_stdio(self, runs):
        assert mcp_main.main([]) == 0
        assert runs == [{"transport": "stdio"}]

    def test_transport_from_environment(self, runs, monkeypatch):
        monkeypatch.setenv("ICB_MCP_TRANSPORT", "SSE")
        assert mcp_main.main([]) == 0
        assert runs == [{"transport": "sse"}]

    def test_option_overrides_environment(self, runs, monkeypatch):
        monkeypatch.setenv("ICB_MCP_TRANSPORT", "sse")
        assert mcp_main.main(["--transport", "streamable-http"]) == 0
        assert runs == [{"transport": "streamable-http"}]

    def test_unknown_transport(self, runs, monkeypatch, capsys):
        monkeypatch.setenv("ICB_MCP_TRANSPORT", "carrier-pigeon")
        assert mcp_main.main([]) == 1
        assert runs == []
        assert "ICB_MCP_TRANSPORT must be one of" in capsys.readouterr().err

    def test_rejects_unknown_option_value(self, runs):
        with pytest.raises(SystemExit) as excinfo:
            mcp_main.main(["--transport", "carrier-pigeon"])
        assert excinfo.value.code == 2
