"""CSV and JSON artifacts: histograms, traces, reports and metadata."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

TRACE_COLUMNS = ("k", "obj_estimate", "w2_to_truth", "regret_partial", "wall_ms")
REPORT_COLUMNS = ("solver", "measures", "w2_to_truth")


def fmt(x) -> str:
    """Shortest text that reads back to the same double (17 significant digits)."""
    if x is None:
        return "nan"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def write_histograms_csv(path, histograms) -> None:
    H = np.atleast_2d(np.asarray(histograms, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"w{j}" for j in range(H.shape[1])])
        for row in H:
            w.writerow([fmt(v) for v in row])


def read_histograms_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    return np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(rows[0]))


@dataclass(frozen=True)
class TraceRow:
    k: int
    obj_estimate: float
    w2_to_truth: float
    regret_partial: float
    wall_ms: int

    @classmethod
    def from_record(cls, rec) -> "TraceRow":
        dist = rec.dist_to_truth_w2
        return cls(
            k=int(rec.k),
            obj_estimate=float(rec.obj_estimate),
            w2_to_truth=math.nan if dist is None else float(dist),
            regret_partial=float(rec.regret_partial),
            wall_ms=int(rec.wall_ms),
        )

    def same_values(self, other: "TraceRow") -> bool:
        """Equality with NaN matching NaN."""
        a = (self.k, self.obj_estimate, self.w2_to_truth, self.regret_partial, self.wall_ms)
        b = (other.k, other.obj_estimate, other.w2_to_truth, other.regret_partial, other.wall_ms)
        return all(x == y or (isinstance(x, float) and math.isnan(x) and math.isnan(y)) for x, y in zip(a, b))


def write_trace_csv(path, rows: Iterable[TraceRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in rows:
            w.writerow([fmt(getattr(r, c)) for c in TRACE_COLUMNS])


def read_trace_csv(path) -> list[TraceRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
            raise ValueError(f"{path}: expected columns {TRACE_COLUMNS}, got {reader.fieldnames}")
        return [
            TraceRow(
                k=int(r["k"]),
                obj_estimate=float(r["obj_estimate"]),
                w2_to_truth=float(r["w2_to_truth"]),
                regret_partial=float(r["regret_partial"]),
                wall_ms=int(r["wall_ms"]),
            )
            for r in reader
        ]


def write_report_csv(path, rows: Sequence[tuple]) -> None:
    """Long-format curves: one ``(solver, measures, w2_to_truth)`` row per recorded point."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for solver, measures, dist in rows:
            w.writerow([solver, fmt(int(measures)), fmt(dist)])


def read_report_csv(path) -> list[tuple]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
            raise ValueError(f"{path}: expected columns {REPORT_COLUMNS}, got {reader.fieldnames}")
        return [(r["solver"], int(r["measures"]), float(r["w2_to_truth"])) for r in reader]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())
