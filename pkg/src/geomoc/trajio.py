"""Trajectory tables: CSV/JSON emission and column-wise comparison.

One row per record: a time (or step) column, then each named matrix
flattened row-major (columns like Q00, Q01, ...), then any scalar
diagnostic columns. All numbers print with 17 significant digits so a
written file round-trips bit-exactly.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import DomainError

__all__ = [
    "fmt17",
    "trajectory_table",
    "table_to_csv",
    "csv_to_table",
    "trajectory_json",
    "compare_tables",
]


def fmt17(x) -> str:
    return format(float(x), ".17g")


def _matrix_headers(name: str, n: int) -> list[str]:
    return [f"{name}{i}{j}" for i in range(n) for j in range(n)]


def trajectory_table(time_name, times, matrices=None, scalars=None):
    """Assemble (header, rows) from a time vector, named (T, n, n)
    matrix stacks, and named scalar columns."""
    times = np.asarray(times, dtype=float)
    header = [time_name]
    cols = [times]
    for name, stack in (matrices or {}).items():
        arr = np.asarray(stack, dtype=float)
        if arr.ndim != 3 or arr.shape[0] != times.size:
            raise DomainError(f"matrix stack {name!r} must be (T, n, n) matching the time column")
        header.extend(_matrix_headers(name, arr.shape[1]))
        cols.append(arr.reshape(arr.shape[0], -1))
    for name, vals in (scalars or {}).items():
        v = np.asarray(vals, dtype=float)
        if v.shape != times.shape:
            raise DomainError(f"scalar column {name!r} must match the time column")
        header.append(name)
        cols.append(v)
    rows = np.column_stack(cols)
    return header, rows


def table_to_csv(header, rows) -> str:
    lines = [",".join(header)]
    for row in np.asarray(rows, dtype=float):
        lines.append(",".join(fmt17(x) for x in row))
    return "\n".join(lines) + "\n"


def csv_to_table(text: str):
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines:
        raise DomainError("empty table")
    header = lines[0].split(",")
    try:
        rows = np.array([[float(tok) for tok in ln.split(",")] for ln in lines[1:]], dtype=float)
    except ValueError as exc:
        raise DomainError(f"non-numeric cell in table: {exc}") from exc
    if rows.size and rows.shape[1] != len(header):
        raise DomainError("row width does not match header")
    return header, rows


def trajectory_json(time_name, times, matrices=None, scalars=None) -> str:
    """JSON variant: {"t": [...], "Q": [[row-major entries], ...], ...}."""
    doc = {time_name: [float(t) for t in np.asarray(times, dtype=float)]}
    for name, stack in (matrices or {}).items():
        arr = np.asarray(stack, dtype=float)
        doc[name] = [frame.ravel().tolist() for frame in arr]
    for name, vals in (scalars or {}).items():
        doc[name] = [float(v) for v in np.asarray(vals, dtype=float)]
    return json.dumps(doc)


def compare_tables(text_a: str, text_b: str) -> dict:
    """Per-column max absolute and relative deviation of two CSV tables.

    Raises ``DomainError`` on schema mismatch (different headers or row
    counts).
    """
    header_a, rows_a = csv_to_table(text_a)
    header_b, rows_b = csv_to_table(text_b)
    if header_a != header_b:
        raise DomainError("table schemas differ (headers do not match)")
    if rows_a.shape != rows_b.shape:
        raise DomainError(f"table shapes differ: {rows_a.shape} vs {rows_b.shape}")
    columns = []
    for j, name in enumerate(header_a):
        a, b = rows_a[:, j], rows_b[:, j]
        absdev = np.abs(a - b)
        denom = np.maximum(np.abs(a), np.abs(b))
        with np.errstate(invalid="ignore", divide="ignore"):
            rel = np.where(denom > 0.0, absdev / denom, 0.0)
        columns.append(
            {
                "column": name,
                "max_abs": float(absdev.max() if absdev.size else 0.0),
                "max_rel": float(rel.max() if rel.size else 0.0),
            }
        )
    return {
        "columns": columns,
        "max_abs": max((c["max_abs"] for c in columns), default=0.0),
        "max_rel": max((c["max_rel"] for c in columns), default=0.0),
        "rows": int(rows_a.shape[0]),
    }
