"""Export utilities: CSV trajectories and JSON reports."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

from icb_response.integrator import Trajectory
from icb_response.models import STATE_COMPONENTS

logger = logging.getLogger(__name__)

CSV_HEADER: tuple[str, ...] = ("t", *STATE_COMPONENTS)
REPORT_SCHEMA_VERSION = 1
SCHEMA_PATH = Path(__file__).resolve().parent / "schemas" / "report.schema.json"


def emit_csv(traj: Trajectory) -> bytes:
    """Serialise a trajectory as UTF-8 CSV with header ``t,C,A,I,E,S``.

    Values are written with ``repr`` so that parsing them back gives the
    same floats bit for bit.
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for t, row in zip(traj.times.tolist(), traj.states.tolist()):
        writer.writerow([repr(float(t)), *(repr(float(v)) for v in row)])
    return buffer.getvalue().encode("utf-8")


def read_csv(data: bytes | str) -> Trajectory:
    """Parse CSV produced by ``emit_csv`` back into a trajectory.

    Raises:
        ValueError: If the header or a row is malformed.
    """
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ValueError(f"CSV header must be {','.join(CSV_HEADER)}")
    body = rows[1:]
    if not body:
        raise ValueError("CSV contains no samples")
    try:
        values = np.array([[float(v) for v in row] for row in body])
    except ValueError as exc:
        raise ValueError(f"CSV contains a non-numeric value: {exc}") from None
    if values.shape[1] != len(CSV_HEADER):
        raise ValueError(f"CSV rows must have {len(CSV_HEADER)} columns")
    return Trajectory(times=values[:, 0], states=values[:, 1:])


def write_csv(traj: Trajectory, filepath: str | Path) -> Path:
    """Write a trajectory to a CSV file.

    Args:
        traj: Trajectory to export.
        filepath: Output file path.

    Returns:
        The Path to the written file.
    """
    filepath = Path(filepath)
    filepath.parent.mkdir(parents=True, exist_ok=True)
    filepath.write_bytes(emit_csv(traj))
    logger.info("Exported %d samples to %s", len(traj), filepath)
    return filepath


def _to_jsonable(value: Any) -> Any:
    """Normalise report values: enums to names, non-finite floats to strings."""
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


def emit_report(command: str, result: Any) -> bytes:
    """Serialise a command result as a versioned JSON report."""
    document = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": command,
        "result": _to_jsonable(result),
    }
    text = json.dumps(document, indent=2, sort_keys=True, allow_nan=False)
    return (text + "\n").encode("utf-8")


def write_report(command: str, result: Any, filepath: str | Path) -> Path:
    """Write a JSON report for one command.

    Args:
        command: Name of the command that produced ``result``.
        result: Plain data (dicts, lists, numbers, strings, enums).
        filepath: Output file path.

    Returns:
        The Path to the written file.
    """
    filepath = Path(filepath)
    filepath.parent.mkdir(parents=True, exist_ok=True)
    filepath.write_bytes(emit_report(command, result))
    logger.info("Exported %s report to %s", command, filepath)
    return filepath


def load_report_schema() -> dict:
    """Return the JSON schema every report conforms to."""
    return json.loads(SCHEMA_PATH.read_text(encoding="utf-8"))
