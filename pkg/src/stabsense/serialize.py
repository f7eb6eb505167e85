"""CSV / JSON writers and readers for everything the CLI emits.

CSV files carry ``# key: <json>`` metadata lines, then a column-name row,
then comma-separated values printed to 12 significant digits.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .bloch import Trajectory
from .sensitivity import ImprovementReport, MiscalibrationResult, SweepResult
from .shots import ShotRecord

TOOL = "stabsense"
VERSION = "0.1.0"

TRAJECTORY_COLUMNS = ("t", "v_x", "v_y", "v_z", "h_y")
SWEEP_COLUMNS = ("t1_over_t2", "v_x0", "ratio")
MISCAL_COLUMNS = ("miscal_1_over_T1", "miscal_1_over_T2", "ratio")
WAVEFORM_COLUMNS = ("t", "h_y")
RECORD_COLUMNS = ("protocol", "delta", "t_meas", "N", "k_plus", "seed", "iteration", "t2")

# SI names for columns that carry a time or rate unit
_SI_NAMES = {"t": "t_s", "h_y": "h_y_rad_s", "delta": "delta_rad_s", "t_meas": "t_meas_s", "t2": "t2_s",
             "t_b": "t_b_s"}


def si_columns(columns: Sequence[str], si: bool) -> tuple[str, ...]:
    return tuple(_SI_NAMES.get(c, c) for c in columns) if si else tuple(columns)


def _check_columns(cols: Sequence[str], expected: Sequence[str], what: str) -> bool:
    """True if ``cols`` are the SI variant of ``expected``."""
    if tuple(cols) == tuple(expected):
        return False
    if tuple(cols) == si_columns(expected, True):
        return True
    raise ValueError(f"not a {what} file: columns {list(cols)}")


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.12g}"


def provenance(command: str, units: str, config: dict | None = None, time_scale: float = 1.0) -> dict:
    """Header metadata. ``time_scale`` is seconds per T2 in SI mode and 1 otherwise."""
    meta = {"tool": TOOL, "version": VERSION, "command": command, "units": units, "time_scale": time_scale}
    if config is not None:
        meta["config"] = config
    return meta


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence], meta: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        for key in meta:
            fh.write(f"# {key}: {json.dumps(meta[key], sort_keys=True)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def read_csv(path: str | Path) -> tuple[dict, list[str], list[list[str]]]:
    meta: dict = {}
    with Path(path).open(newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(":")
            meta[key.strip()] = json.loads(value)
        elif line:
            body.append(line)
    reader = list(csv.reader(body))
    return meta, reader[0], reader[1:]


def _numeric(rows: list[list[str]]) -> np.ndarray:
    return np.array([[float(v) for v in r] for r in rows], dtype=float).reshape(len(rows), -1)


def write_json(path: str | Path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return path


def read_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def write_trajectory(path, traj: Trajectory, meta: dict, time_scale: float = 1.0, si: bool = False) -> Path:
    """``time_scale`` converts dimensionless time to output units (T2 in seconds for SI)."""
    rows = (
        (t * time_scale, *v, h / time_scale)
        for t, v, h in zip(traj.times, traj.states, traj.h_y)
    )
    return write_csv(path, si_columns(TRAJECTORY_COLUMNS, si), rows, meta)


def read_trajectory(path) -> tuple[Trajectory, dict]:
    """Times and drive come back dimensionless."""
    meta, cols, rows = read_csv(path)
    _check_columns(cols, TRAJECTORY_COLUMNS, "trajectory")
    scale = meta.get("time_scale", 1.0)
    data = _numeric(rows)
    return Trajectory(times=data[:, 0] / scale, states=data[:, 1:4], h_y=data[:, 4] * scale), meta


def write_waveform(path, times: np.ndarray, h_y: np.ndarray, meta: dict, time_scale: float = 1.0,
                   si: bool = False) -> Path:
    rows = ((t * time_scale, h / time_scale) for t, h in zip(times, h_y))
    return write_csv(path, si_columns(WAVEFORM_COLUMNS, si), rows, meta)


def read_waveform(path) -> tuple[np.ndarray, np.ndarray, dict]:
    meta, cols, rows = read_csv(path)
    _check_columns(cols, WAVEFORM_COLUMNS, "waveform")
    scale = meta.get("time_scale", 1.0)
    data = _numeric(rows)
    return data[:, 0] / scale, data[:, 1] * scale, meta


def _json_float(x: float):
    return None if math.isinf(x) else x


def report_payload(report: ImprovementReport, meta: dict, time_scale: float = 1.0, si: bool = False) -> dict:
    """JSON body of an :class:`ImprovementReport`; an infinite ``t_b`` is written as null."""
    body = asdict(report)
    for key in ("t_meas", "t_b"):
        value = body.pop(key) * time_scale
        body[_SI_NAMES[key] if si else key] = _json_float(value)
    return {**body, "provenance": meta}


def read_report(path) -> tuple[ImprovementReport, dict]:
    """Inverse of :func:`report_payload`; times come back dimensionless."""
    payload = read_json(path)
    meta = payload.pop("provenance")
    scale = meta.get("time_scale", 1.0)
    for key in ("t_meas", "t_b"):
        if _SI_NAMES[key] in payload:
            payload[key] = payload.pop(_SI_NAMES[key])
        value = payload[key]
        payload[key] = math.inf if value is None else value / scale
    names = {f.name for f in fields(ImprovementReport)}
    return ImprovementReport(**{k: v for k, v in payload.items() if k in names}), meta


def write_sweep(path, result: SweepResult, meta: dict) -> Path:
    return write_csv(path, SWEEP_COLUMNS, result.long_rows(), meta)


def read_sweep(path) -> tuple[SweepResult, dict]:
    meta, cols, rows = read_csv(path)
    if tuple(cols) != SWEEP_COLUMNS:
        raise ValueError(f"not a sweep file: columns {cols}")
    data = _numeric(rows)
    r_axis = _unique_in_order(data[:, 0])
    v_axis = _unique_in_order(data[:, 1])
    ratio = data[:, 2].reshape(len(r_axis), len(v_axis))
    return SweepResult(meta.get("mode", ""), r_axis, v_axis, ratio, meta.get("delta", math.nan)), meta


def write_miscal(path, result: MiscalibrationResult, meta: dict) -> Path:
    return write_csv(path, MISCAL_COLUMNS, result.long_rows(), meta)


def read_miscal(path) -> tuple[MiscalibrationResult, dict]:
    meta, cols, rows = read_csv(path)
    if tuple(cols) != MISCAL_COLUMNS:
        raise ValueError(f"not a miscalibration file: columns {cols}")
    data = _numeric(rows)
    m1 = _unique_in_order(data[:, 0])
    m2 = _unique_in_order(data[:, 1])
    return MiscalibrationResult(meta.get("mode", ""), m1, m2, data[:, 2].reshape(len(m1), len(m2))), meta


def write_records(path, records: Sequence[ShotRecord], meta: dict, time_scale: float = 1.0,
                  si: bool = False) -> Path:
    rows = ((r.protocol, r.delta / time_scale, r.t_meas * time_scale, r.N, r.k_plus, r.seed, r.iteration,
             r.t2 * time_scale) for r in records)
    return write_csv(path, si_columns(RECORD_COLUMNS, si), rows, meta)


def read_records(path) -> tuple[list[ShotRecord], dict]:
    meta, cols, rows = read_csv(path)
    _check_columns(cols, RECORD_COLUMNS, "shot-record")
    scale = meta.get("time_scale", 1.0)
    records = [
        ShotRecord(p, float(d) * scale, float(t) / scale, int(n), int(k), int(s), int(i), float(t2) / scale)
        for p, d, t, n, k, s, i, t2 in rows
    ]
    return records, meta


def _unique_in_order(values: np.ndarray) -> np.ndarray:
    _, idx = np.unique(values, return_index=True)
    return values[np.sort(idx)]
