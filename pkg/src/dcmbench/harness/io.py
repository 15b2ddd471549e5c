"""Per-tick log, CSV serialization and the metrics summary file."""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np
import yaml

SCHEMA_VERSION = 1

STR_COLUMNS = ("phase", "simplified_status", "wholebody_status", "fixed_frame")
INT_COLUMNS = ("simplified_iterations", "wholebody_iterations", "fallback", "lf_contact", "rf_contact",
               "zmp_projected")

_BASE_COLUMNS = (
    "t", "phase",
    "xi_ref_x", "xi_ref_y", "xi_x", "xi_y",
    "zmp_ref_x", "zmp_ref_y", "zmp_cmd_x", "zmp_cmd_y", "zmp_meas_x", "zmp_meas_y", "zmp_cmd_violation",
    "com_ref_x", "com_ref_y", "com_x", "com_y", "com_z",
    "com_vel_ref_x", "com_vel_ref_y", "com_vel_cmd_x", "com_vel_cmd_y", "com_vel_x", "com_vel_y",
    "lf_contact", "rf_contact",
    "lf_ref_x", "lf_ref_y", "lf_ref_z", "lf_ref_yaw", "rf_ref_x", "rf_ref_y", "rf_ref_z", "rf_ref_yaw",
    "lf_x", "lf_y", "lf_z", "lf_yaw", "rf_x", "rf_y", "rf_z", "rf_yaw",
    "simplified_status", "simplified_iterations", "wholebody_status", "wholebody_iterations", "fallback",
    "fixed_frame", "base_x", "base_y", "base_z", "base_error",
    "dynamics_residual", "zmp_residual", "friction_residual", "cop_residual", "torque_violation",
    "zmp_projected",
)


def log_columns(joint_names=()) -> list[str]:
    cols = list(_BASE_COLUMNS)
    for prefix in ("s", "sd", "tau"):
        cols += [f"{prefix}_{j}" for j in joint_names]
    return cols


def _kind(name: str) -> str:
    return "s" if name in STR_COLUMNS else "i" if name in INT_COLUMNS else "f"


def _default(kind: str):
    return "" if kind == "s" else 0 if kind == "i" else math.nan


class ControlTickLog:
    """Rows of a fixed column schema, one per control tick."""

    def __init__(self, columns, rows=None, schema_version: int = SCHEMA_VERSION):
        self.columns = list(columns)
        self.kinds = [_kind(c) for c in self.columns]
        self.index = {c: i for i, c in enumerate(self.columns)}
        self.rows: list[list] = [list(r) for r in rows] if rows else []
        self.schema_version = schema_version

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def joint_names(self) -> list[str]:
        return [c[2:] for c in self.columns if c.startswith("s_")]

    def append(self, values: dict) -> None:
        unknown = set(values) - set(self.index)
        if unknown:
            raise KeyError(f"unknown log columns {sorted(unknown)}")
        if self.rows and values.get("t", math.inf) <= self.rows[-1][0]:
            raise ValueError("log time must increase")
        row = []
        for c, k in zip(self.columns, self.kinds):
            v = values.get(c, _default(k))
            row.append(str(v) if k == "s" else int(v) if k == "i" else float(v))
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        i = self.index[name]
        if self.kinds[i] == "s":
            return np.array([r[i] for r in self.rows], dtype=object)
        return np.array([r[i] for r in self.rows], dtype=float)

    def matrix(self, names) -> np.ndarray:
        names = list(names)
        if not names or not len(self):
            return np.zeros((len(self), len(names)))
        return np.column_stack([self.column(n) for n in names])

    def __eq__(self, other) -> bool:
        if not isinstance(other, ControlTickLog) or other.columns != self.columns or len(other) != len(self):
            return False
        for a, b in zip(self.rows, other.rows):
            for x, y, k in zip(a, b, self.kinds):
                if k == "f" and math.isnan(x) and math.isnan(y):
                    continue
                if x != y:
                    return False
        return True


def _fmt(v, kind: str) -> str:
    if kind == "f":
        return repr(float(v))
    return str(v)


def write_log(log: ControlTickLog, path) -> None:
    path = Path(path)
    try:
        with open(path, "w", newline="", encoding="ascii") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(log.columns)
            for row in log.rows:
                w.writerow([_fmt(v, k) for v, k in zip(row, log.kinds)])
    except OSError as e:
        raise OSError(f"cannot write log to {path}: {e.strerror}") from e


def read_log(path) -> ControlTickLog:
    path = Path(path)
    try:
        with open(path, newline="", encoding="ascii") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            kinds = [_kind(c) for c in header]
            rows = []
            for line, r in enumerate(reader, start=2):
                if len(r) != len(header):
                    raise ValueError(f"{path}:{line}: expected {len(header)} fields, got {len(r)}")
                rows.append([v if k == "s" else int(v) if k == "i" else float(v) for v, k in zip(r, kinds)])
    except OSError as e:
        raise OSError(f"cannot read log from {path}: {e.strerror}") from e
    return ControlTickLog(header, rows)


def write_metrics(metrics, path, extra: dict | None = None) -> None:
    data = {"schema_version": SCHEMA_VERSION, **(extra or {}), **metrics.to_dict()}
    try:
        with open(path, "w") as fh:
            yaml.safe_dump(data, fh, sort_keys=False)
    except OSError as e:
        raise OSError(f"cannot write metrics to {path}: {e.strerror}") from e


def read_metrics(path) -> dict:
    with open(path) as fh:
        return yaml.safe_load(fh)


def export(log: ControlTickLog, metrics, directory, footsteps=None, extra: dict | None = None) -> dict:
    """Write ``log.csv``, ``metrics.txt`` and (if given) ``footsteps.txt`` into ``directory``."""
    from ..planner import dump_footsteps

    out = Path(directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create output directory {out}: {e.strerror}") from e
    paths = {"log": out / "log.csv", "metrics": out / "metrics.txt"}
    write_log(log, paths["log"])
    write_metrics(metrics, paths["metrics"], extra)
    if footsteps is not None:
        paths["footsteps"] = out / "footsteps.txt"
        dump_footsteps(footsteps, paths["footsteps"])
    return paths
