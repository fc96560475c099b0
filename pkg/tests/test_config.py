"""Tests for environment settings and run-configuration documents."""

from pathlib import Path

import pytest

from icb_response.config import (
    ConfigError,
    RunConfig,
    get_log_level,
    get_mcp_transport,
    get_output_dir,
    get_workers,
    load_config,
    parse_config,
)
from icb_response.models import baseline_params


class TestEnvironment:
    """Tests for the environment-variable getters."""

    def test_log_level_default(self, monkeypatch):
        monkeypatch.delenv("ICB_LOG_LEVEL", raising=False)
        assert get_log_level() == "INFO"

    def test_log_level_is_case_insensitive(self, monkeypatch):
        monkeypatch.setenv("ICB_LOG_LEVEL", "debug")
        assert get_log_level() == "DEBUG"

    def test_log_level_rejects_unknown(self, monkeypatch):
        monkeypatch.setenv("ICB_LOG_LEVEL", "loud")
        with pytest.raises(ValueError, match="ICB_LOG_LEVEL"):
            get_log_level()

    def test_output_dir(self, monkeypatch):
        monkeypatch.setenv("ICB_OUTPUT_DIR", "runs")
        assert get_output_dir() == Path("runs")

    @pytest.mark.parametrize(("raw", "expected"), [("1", 1), ("4", 4)])
    def test_workers(self, monkeypatch, raw, expected):
        monkeypatch.setenv("ICB_WORKERS", raw)
        assert get_workers() == expected

    @pytest.mark.parametrize("raw", ["0", "two"])
    def test_workers_rejects_invalid(self, monkeypatch, raw):
        monkeypatch.setenv("ICB_WORKERS", raw)
        with pytest.raises(ValueError, match="ICB_WORKERS"):
            get_workers()

    def test_mcp_transport_default(self, monkeypatch):
        monkeypatch.delenv("ICB_MCP_TRANSPORT", raising=False)
        assert get_mcp_transport() == "stdio"

    def test_mcp_transport_rejects_unknown(self, monkeypatch):
        monkeypatch.setenv("ICB_MCP_TRANSPORT", "http2")
        with pytest.raises(ValueError, match="ICB_MCP_TRANSPORT"):
            get_mcp_transport()


class TestParseConfig:
    """Tests for parse_config."""

    def test_empty_document_is_baseline(self):
        config = parse_config("")
        assert config == RunConfig()
        assert config.params == baseline_params()
        assert config.horizon == 3650.0
        assert config.initial.A == 1.0

    def test_full_document(self):
        text = "\n".join(
            [
                "# CTLA-4 blockade alone",
                "gamma = 37.4168",
                "",
                "initial.signal_seed = 0",
                "initial.C = 500",
                "integrator.rel_tol = 1e-9",
                "integrator.max_steps = 1000",
                "integrator.abs_tol = 1e-9,1e-9,1e-9,1e-12,1e-12",
                "metrics.horizon = 1095  # three years",
                "metrics.partial_band_lo = 0.1",
            ]
        )
        config = parse_config(text)
        assert config.params.gamma == 37.4168
        assert config.signal_seed == 0.0
        assert config.initial.A == 0.0
        assert config.initial.C == 500.0
        assert config.integrator.rel_tol == 1e-9
        assert config.integrator.max_steps == 1000
        assert config.integrator.abs_tol == (1e-9, 1e-9, 1e-9, 1e-12, 1e-12)
        assert config.metrics.horizon == 1095.0
        assert config.metrics.partial_band == (0.1, 0.95)
        assert config.horizon == 1095.0

    def test_explicit_horizon_overrides_metrics(self):
        assert parse_config("horizon = 400").horizon == 400.0

    def test_to_dict(self):
        data = parse_config("beta = 0.0089988").to_dict()
        assert data["params"]["beta"] == 0.0089988
        assert data["initial"]["C"] == 1000.0

    @pytest.mark.parametrize(
        ("text", "line", "key", "message"),
        [
            ("gamma = 37.4\nzeta = 1", 2, "zeta", "unknown key"),
            ("metrics.colour = 1", 1, "metrics.colour", "unknown key"),
            ("beta = 0.009\nbeta = 0.008", 2, "beta", "duplicate key"),
            ("gamma = fast", 1, "gamma", "not a number"),
            ("gamma", 1, "gamma", "missing value"),
            ("integrator.max_steps = 1.5", 1, "integrator.max_steps", "not an integer"),
        ],
    )
    def test_rejects_malformed(self, text, line, key, message):
        with pytest.raises(ConfigError, match=message) as excinfo:
            parse_config(text)
        assert excinfo.value.line == line
        assert excinfo.value.key == key
        assert str(excinfo.value).startswith(f"line {line}, key '{key}'")

    def test_syntax_error_reports_line(self):
        with pytest.raises(ConfigError, match="cannot parse") as excinfo:
            parse_config("beta = 0.009\n= 5")
        assert excinfo.value.line == 2

    def test_line_numbers_count_blank_lines_and_comments(self):
        with pytest.raises(ConfigError) as excinfo:
            parse_config("beta = 0.009\n\n# note\n\nzeta = 1\n")
        assert excinfo.value.line == 5

    @pytest.mark.parametrize(
        ("text", "key"),
        [
            ("C_star = 0", "C_star"),
            ("initial.signal_seed = -1", "initial.signal_seed"),
            ("initial.E = -2", "initial.E"),
            ("integrator.rel_tol = 2", "integrator.rel_tol"),
            ("metrics.quick_cutoff = 5000", "metrics.quick_cutoff"),
            ("horizon = -1", "horizon"),
        ],
    )
    def test_invariant_violations_name_the_key(self, text, key):
        with pytest.raises(ConfigError) as excinfo:
            parse_config(text)
        assert excinfo.value.key == key
        assert excinfo.value.line == 1


class TestLoadConfig:
    """Tests for load_config."""

    def test_none_is_baseline(self):
        assert load_config(None) == RunConfig()

    def test_reads_file(self, tmp_path):
        path = tmp_path / "run.env"
        path.write_text("gamma = 37.4168\nmetrics.horizon = 400\n", encoding="utf-8")
        config = load_config(path)
        assert config.params.gamma == 37.4168
        assert config.horizon == 400.0

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "absent.env")
