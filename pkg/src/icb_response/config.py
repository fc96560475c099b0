"""Configuration: environment variables and the run-configuration document.

A run configuration is a dotenv-style ``key = value`` document::

    # CTLA-4 blockade alone
    gamma = 37.4168
    initial.signal_seed = 0
    integrator.rel_tol = 1e-9
    metrics.horizon = 1095

Every key is optional; see Docs/Configuration.md for the full schema.
"""

from __future__ import annotations

import io
import logging
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from dotenv import load_dotenv
from dotenv.parser import Binding, parse_stream

from icb_response.integrator import IntegratorConfig
from icb_response.metrics import MetricsConfig
from icb_response.models import (
    STATE_COMPONENTS,
    ModelParams,
    StateVector,
    baseline_params,
    initial_state,
)

logger = logging.getLogger(__name__)

# Load .env from the project root
_env_path = Path(__file__).resolve().parents[2] / ".env"
load_dotenv(_env_path)

CONFIG_SCHEMA_VERSION = 1

_INTEGRATOR_KEYS = tuple(f.name for f in fields(IntegratorConfig))
_METRICS_KEYS = (
    "response_frac",
    "quick_cutoff",
    "eradication_frac",
    "partial_band_lo",
    "partial_band_hi",
    "steadiness_window",
    "steadiness_rel_var",
    "horizon",
)


def get_log_level() -> str:
    """Return the log level name from ``ICB_LOG_LEVEL`` (default INFO)."""
    level = os.getenv("ICB_LOG_LEVEL", "INFO").strip().upper()
    if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        raise ValueError(f"ICB_LOG_LEVEL must be a logging level name, got '{level}'")
    return level


def get_output_dir() -> Path:
    """Return the default output directory from ``ICB_OUTPUT_DIR``."""
    return Path(os.getenv("ICB_OUTPUT_DIR", "output"))


MCP_TRANSPORTS = ("stdio", "sse", "streamable-http")


def get_mcp_transport() -> str:
    """Return the MCP server transport from ``ICB_MCP_TRANSPORT`` (default stdio).

    Raises:
        ValueError: If ICB_MCP_TRANSPORT names an unknown transport.
    """
    transport = os.getenv("ICB_MCP_TRANSPORT", "stdio").strip().lower()
    if transport not in MCP_TRANSPORTS:
        raise ValueError(
            f"ICB_MCP_TRANSPORT must be one of {', '.join(MCP_TRANSPORTS)}, "
            f"got '{transport}'"
        )
    return transport


def get_workers() -> int:
    """Return the worker-process count for experiments from ``ICB_WORKERS``.

    Raises:
        ValueError: If ICB_WORKERS is not a positive integer.
    """
    raw = os.getenv("ICB_WORKERS", "1")
    try:
        workers = int(raw)
    except ValueError:
        raise ValueError(f"ICB_WORKERS must be an integer, got '{raw}'") from None
    if workers < 1:
        raise ValueError(f"ICB_WORKERS must be >= 1, got {workers}")
    return workers


class ConfigError(ValueError):
    """Raised for a malformed or invalid run-configuration document."""

    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")
        self.line = line
        self.key = key


@dataclass(frozen=True)
class RunConfig:
    """Everything one command needs: parameters, start state and settings."""

    params: ModelParams = field(default_factory=baseline_params)
    initial: StateVector | None = None
    signal_seed: float = 1.0
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    horizon: float | None = None

    def __post_init__(self) -> None:
        if self.initial is None:
            object.__setattr__(
                self, "initial", initial_state(self.params, self.signal_seed)
            )
        if self.horizon is None:
            object.__setattr__(self, "horizon", self.metrics.horizon)
        if not self.horizon > 0:
            raise ValueError(f"horizon must be > 0, got {self.horizon!r}")

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "initial": self.initial.to_dict(),
            "signal_seed": self.signal_seed,
            "horizon": self.horizon,
        }


def _number(value: str | None, line: int, key: str) -> float:
    if value is None or not value.strip():
        raise ConfigError("missing value", line, key)
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"'{value}' is not a number", line, key) from None


def _integer(value: str | None, line: int, key: str) -> int:
    number = _number(value, line, key)
    if not number.is_integer():
        raise ConfigError(f"'{value}' is not an integer", line, key)
    return int(number)


def _line_of(binding: Binding) -> int:
    # original.line is where the leading blank lines start
    text = binding.original.string
    skipped = text[: len(text) - len(text.lstrip())]
    return binding.original.line + skipped.count("\n")


def _read_bindings(text: str) -> dict[str, tuple[str | None, int]]:
    bindings: dict[str, tuple[str | None, int]] = {}
    for binding in parse_stream(io.StringIO(text)):
        line = _line_of(binding)
        if binding.error:
            raise ConfigError(
                f"cannot parse '{binding.original.string.strip()}'", line
            )
        if binding.key is None:
            continue
        if binding.key in bindings:
            raise ConfigError(
                f"duplicate key (first set on line {bindings[binding.key][1]})",
                line,
                binding.key,
            )
        bindings[binding.key] = (binding.value, line)
    return bindings


def parse_config(text: str) -> RunConfig:
    """Parse a run-configuration document onto the baseline defaults.

    Args:
        text: The document; an empty string yields the baseline run.

    Returns:
        The merged RunConfig.

    Raises:
        ConfigError: On syntax errors, unknown or duplicate keys,
            non-numeric values, or values violating a model invariant.
    """
    bindings = _read_bindings(text)
    param_names = set(ModelParams.field_names())

    param_changes: dict[str, float] = {}
    initial_changes: dict[str, float] = {}
    integrator_changes: dict[str, object] = {}
    metric_values: dict[str, float] = {}
    signal_seed = 1.0
    horizon: float | None = None

    for key, (value, line) in bindings.items():
        section, _, name = key.rpartition(".")
        if not section and key in param_names:
            param_changes[key] = _number(value, line, key)
        elif not section and key == "horizon":
            horizon = _number(value, line, key)
        elif section == "initial" and name == "signal_seed":
            signal_seed = _number(value, line, key)
        elif section == "initial" and name in STATE_COMPONENTS:
            initial_changes[name] = _number(value, line, key)
        elif section == "integrator" and name in _INTEGRATOR_KEYS:
            if name == "max_steps":
                integrator_changes[name] = _integer(value, line, key)
            elif name == "abs_tol" and value is not None and "," in value:
                integrator_changes[name] = tuple(
                    _number(part, line, key) for part in value.split(",")
                )
            else:
                integrator_changes[name] = _number(value, line, key)
        elif section == "metrics" and name in _METRICS_KEYS:
            metric_values[name] = _number(value, line, key)
        else:
            raise ConfigError("unknown key", line, key)

    def checked(key: str, build, *args, **kwargs):
        try:
            return build(*args, **kwargs)
        except ValueError as exc:
            key = _blame(bindings, key, str(exc))
            line = bindings[key][1] if key in bindings else None
            raise ConfigError(str(exc), line, key) from None

    params = baseline_params()
    for name, value in param_changes.items():
        params = checked(name, params.replace, **{name: value})

    state = checked("initial.signal_seed", initial_state, params, signal_seed)
    for name, value in initial_changes.items():
        state = checked(f"initial.{name}", state.replace, **{name: value})

    integrator = checked("integrator", IntegratorConfig, **integrator_changes)

    defaults = MetricsConfig()
    band = (
        metric_values.pop("partial_band_lo", defaults.partial_band[0]),
        metric_values.pop("partial_band_hi", defaults.partial_band[1]),
    )
    metrics = checked("metrics", MetricsConfig, partial_band=band, **metric_values)

    config = checked(
        "horizon",
        RunConfig,
        params=params,
        initial=state,
        signal_seed=signal_seed,
        integrator=integrator,
        metrics=metrics,
        horizon=horizon,
    )
    logger.debug("Parsed %d configuration keys", len(bindings))
    return config


def _blame(bindings: dict[str, tuple[str | None, int]], key: str, message: str) -> str:
    """Narrow a section name to the document key an error message mentions."""
    if key in bindings or "." in key:
        return key
    for candidate in bindings:
        section, _, name = candidate.rpartition(".")
        if section == key and name in message:
            return candidate
    return key


def load_config(path: str | Path | None) -> RunConfig:
    """Read and parse a configuration file; None gives the baseline run."""
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    logger.info("Loaded run configuration from %s", path)
    return parse_config(text)
