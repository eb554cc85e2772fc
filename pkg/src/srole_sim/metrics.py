"""Per-episode metrics records, CSV I/O, replication aggregates and
plot-ready figure tables."""
from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class MetricsRecord:
    method: str
    seed: int
    workload_level: int
    num_nodes: int
    model_kind: str
    kappa_unit: float
    jct_mean: float
    jct_max: float
    jct_per_job: tuple[float, ...]
    tasks_min: int
    tasks_median: float
    tasks_max: int
    util_cpu: float
    util_mem: float
    util_bw: float
    sched_ops: int
    shield_ops: int
    decision_time: float
    collisions: int
    detections: int
    corrections: int
    unresolved: int
    messages: int
    memory_violations: int
    infeasible: int

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.type in ("int", "float") and v < 0:
                raise ValueError(f"{f.name} must be >= 0")
        if self.jct_mean <= 0:
            raise ValueError("completion time must be positive")


COLUMNS = [f.name for f in dataclasses.fields(MetricsRecord)]
_TYPES = {f.name: f.type for f in dataclasses.fields(MetricsRecord)}
GROUP_KEYS = ("method", "model_kind", "num_nodes", "workload_level", "kappa_unit")
NUMERIC = [c for c in COLUMNS if _TYPES[c] in ("int", "float") and c not in GROUP_KEYS + ("seed",)]


def fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, tuple):
        return ";".join(fmt(float(x)) for x in v)
    return str(v)


def sig6(x: float) -> float:
    return float(f"{x:.6g}")


def emit_csv(records: Iterable[MetricsRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in records:
            w.writerow([fmt(getattr(r, c)) for c in COLUMNS])


def csv_row(record: MetricsRecord) -> str:
    return ",".join(fmt(getattr(record, c)) for c in COLUMNS)


def _parse(col: str, text: str):
    kind = _TYPES[col]
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if kind == "str":
        return text
    return tuple(float(x) for x in text.split(";")) if text else ()


def read_csv(path) -> list[MetricsRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != COLUMNS:
            raise ValueError(f"{path}: unexpected header")
        return [MetricsRecord(**{c: _parse(c, v) for c, v in zip(header, row)}) for row in reader]


def nearest_rank(values: Sequence[float], pct: float) -> float:
    """Smallest value with at least ``pct`` percent of the sample at or below it."""
    xs = sorted(values)
    if not xs:
        raise ValueError("empty sample")
    rank = max(1, math.ceil(pct / 100.0 * len(xs)))
    return xs[rank - 1]


def aggregate(records: Iterable[MetricsRecord]) -> list[dict]:
    """Median, p5 and p95 (nearest rank) of every numeric metric per grid point."""
    groups: dict[tuple, list[MetricsRecord]] = {}
    for r in records:
        groups.setdefault(tuple(getattr(r, k) for k in GROUP_KEYS), []).append(r)
    rows = []
    for key in sorted(groups, key=lambda k: tuple(str(x) if isinstance(x, str) else x for x in k)):
        rs = groups[key]
        row = dict(zip(GROUP_KEYS, key))
        row["replications"] = len(rs)
        for m in NUMERIC:
            vals = [float(getattr(r, m)) for r in rs]
            row[f"{m}_median"] = float(np.median(vals))
            row[f"{m}_p5"] = nearest_rank(vals, 5)
            row[f"{m}_p95"] = nearest_rank(vals, 95)
        rows.append(row)
    return rows


def aggregate_columns() -> list[str]:
    return [*GROUP_KEYS, "replications",
            *(f"{m}_{s}" for m in NUMERIC for s in ("median", "p5", "p95"))]


def _write_table(columns: Sequence[str], rows: Iterable[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row[c]) for c in columns])


def emit_aggregate(rows: Sequence[dict], path) -> None:
    _write_table(aggregate_columns(), rows, path)


def read_aggregate(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        conv = {}
        for k, v in row.items():
            if k in ("method", "model_kind"):
                conv[k] = v
            elif k in ("num_nodes", "workload_level", "replications"):
                conv[k] = int(v)
            else:
                conv[k] = float(v)
        out.append(conv)
    return out


# figure -> (x key, metric); utilization and overhead-bars are laid out differently
FIGURES = {
    "completion-vs-nodes": ("num_nodes", "jct_mean"),
    "tasks-per-device-vs-workload": ("workload_level", "tasks_median"),
    "collisions-vs-kappa": ("kappa_unit", "collisions"),
    "utilization": ("resource", None),
    "overhead-bars": ("method", None),
}


class CoverageError(ValueError):
    """The aggregate lacks (method, x) cells a figure needs."""


def _cells(rows: Sequence[dict], x_key: str) -> tuple[list[str], list, dict]:
    methods = sorted({r["method"] for r in rows})
    xs = sorted({r[x_key] for r in rows})
    cells: dict[tuple, dict] = {}
    for r in rows:
        k = (r["method"], r[x_key])
        if k in cells:
            raise ValueError(f"several grid points map to cell {k}; filter the aggregate first")
        cells[k] = r
    missing = [(m, x) for m in methods for x in xs if (m, x) not in cells]
    if missing:
        raise CoverageError("missing (method, x) cells: " + ", ".join(f"({m}, {x})" for m, x in missing))
    return methods, xs, cells


def figure_table(rows: Sequence[dict], figure: str) -> tuple[list[str], list[dict]]:
    """Columns and rows of one plot-ready table."""
    if figure not in FIGURES:
        raise ValueError(f"unknown figure {figure!r}; expected one of {', '.join(FIGURES)}")
    if not rows:
        raise CoverageError("aggregate is empty")
    x_key, metric = FIGURES[figure]
    if figure == "overhead-bars":
        methods = sorted({r["method"] for r in rows})
        seen = {}
        for r in rows:
            if r["method"] in seen:
                raise ValueError(f"several grid points for method {r['method']}; filter the aggregate first")
            seen[r["method"]] = r
        cols = ["method"] + [f"{c}_{s}" for c in ("sched_ops", "shield_ops") for s in ("median", "p5", "p95")]
        return cols, [{"method": m, **{c: seen[m][c] for c in cols[1:]}} for m in methods]
    if figure == "utilization":
        methods = sorted({r["method"] for r in rows})
        by_m = {}
        for r in rows:
            if r["method"] in by_m:
                raise ValueError(f"several grid points for method {r['method']}; filter the aggregate first")
            by_m[r["method"]] = r
        cols = ["resource"] + [f"{m}{s}" for m in methods for s in ("", "_p5", "_p95")]
        out = []
        for res in ("cpu", "mem", "bw"):
            row = {"resource": res}
            for m in methods:
                row[m] = by_m[m][f"util_{res}_median"]
                row[f"{m}_p5"] = by_m[m][f"util_{res}_p5"]
                row[f"{m}_p95"] = by_m[m][f"util_{res}_p95"]
            out.append(row)
        return cols, out
    methods, xs, cells = _cells(rows, x_key)
    cols = [x_key] + [f"{m}{s}" for m in methods for s in ("", "_p5", "_p95")]
    out = []
    for x in xs:
        row = {x_key: x}
        for m in methods:
            c = cells[(m, x)]
            row[m] = c[f"{metric}_median"]
            row[f"{m}_p5"] = c[f"{metric}_p5"]
            row[f"{m}_p95"] = c[f"{metric}_p95"]
        out.append(row)
    return cols, out


def emit_figure_data(rows: Sequence[dict], figure: str, path) -> None:
    cols, table = figure_table(rows, figure)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    _write_table(cols, table, path)
