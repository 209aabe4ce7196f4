"""Reading and writing sequences, detections and benchmark tables."""

from __future__ import annotations

import csv
import dataclasses
import datetime as dt
import io
import json
import math
from pathlib import Path
from typing import Optional

import numpy as np

from .distrib import DistSeq, ProbGrid, estimate_quantile
from .mosum import ChangePointSet, ScanProfile
from .multiscale import aggregate_trajectory

__all__ = [
    "IngestError",
    "read_quantile_csv",
    "write_quantile_csv",
    "format_quantile_csv",
    "ingest_raw",
    "detection_record",
    "multiscale_record",
    "dump_json",
    "to_jsonable",
]

LABEL_HEADER = "date"


class IngestError(ValueError):
    """Malformed input file; the message names the offending line."""


def _parse_label(text: str, lineno: int) -> int:
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return dt.date.fromisoformat(text).toordinal()
    except ValueError:
        raise IngestError(f"line {lineno}: time label {text!r} is neither an integer nor an ISO date") from None


def _parse_float(text: str, lineno: int) -> float:
    try:
        x = float(text)
    except ValueError:
        raise IngestError(f"line {lineno}: {text!r} is not a number") from None
    if not math.isfinite(x):
        raise IngestError(f"line {lineno}: non-finite value {text!r}")
    return x


def read_quantile_csv(path) -> DistSeq:
    """Quantile matrix: a row of grid levels, then one row per distribution.

    When the header's first cell is ``date`` every row starts with an integer
    time label. Lines starting with ``#`` are skipped.
    """
    with open(path, newline="") as fh:
        rows = [(k, r) for k, r in enumerate(csv.reader(fh), start=1) if r and any(c.strip() for c in r) and not r[0].lstrip().startswith("#")]
    if len(rows) < 2:
        raise IngestError("quantile file needs a header of grid levels and at least one row")
    lineno, header = rows[0]
    labelled = header[0].strip().lower() == LABEL_HEADER
    levels = np.array([_parse_float(c, lineno) for c in header[int(labelled):]])
    try:
        grid = ProbGrid(levels)
    except ValueError as exc:
        raise IngestError(f"line {lineno}: {exc}") from None
    labels, values = [], []
    for lineno, row in rows[1:]:
        if len(row) != len(header):
            raise IngestError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        if labelled:
            labels.append(_parse_label(row[0], lineno))
        values.append([_parse_float(c, lineno) for c in row[int(labelled):]])
    try:
        return DistSeq(grid, np.array(values), np.array(labels) if labelled else None)
    except ValueError as exc:
        raise IngestError(str(exc)) from None


def format_quantile_csv(seq: DistSeq) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    fmt = lambda x: format(float(x), ".17g")
    lead = [LABEL_HEADER] if seq.time_labels is not None else []
    w.writerow(lead + [fmt(t) for t in seq.grid.points])
    for i, row in enumerate(seq.values):
        lead = [str(int(seq.time_labels[i]))] if seq.time_labels is not None else []
        w.writerow(lead + [fmt(x) for x in row])
    return buf.getvalue()


def write_quantile_csv(seq: DistSeq, path) -> None:
    Path(path).write_text(format_quantile_csv(seq))


def ingest_raw(
    path,
    grid: ProbGrid,
    strategy: str = "KSE",
    day_col: str = "day",
    value_col: str = "value",
    kde_bandwidth: Optional[float] = None,
) -> DistSeq:
    """Group raw ``(day, value)`` samples by day and estimate one quantile
    function per day, ordered by day label."""
    groups: dict = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or day_col not in reader.fieldnames or value_col not in reader.fieldnames:
            raise IngestError(f"line 1: header must contain columns {day_col!r} and {value_col!r}")
        for row in reader:
            lineno = reader.line_num
            day, val = row.get(day_col), row.get(value_col)
            if day is None or val is None or not day.strip():
                raise IngestError(f"line {lineno}: missing {day_col!r} or {value_col!r}")
            groups.setdefault(_parse_label(day, lineno), []).append(_parse_float(val, lineno))
    if not groups:
        raise IngestError("no data rows")
    days = sorted(groups)
    values = []
    for d in days:
        try:
            q = estimate_quantile(np.array(groups[d]), grid, strategy, kde_bandwidth)
        except ValueError as exc:
            raise IngestError(f"day {d}: {exc}") from None
        values.append(q.values)
    return DistSeq(grid, np.vstack(values), np.array(days))


# -- JSON records ---------------------------------------------------------------


def to_jsonable(obj):
    """Plain JSON types; NaN and infinities become ``null``."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if hasattr(obj, "value") and hasattr(obj, "name"):
        return obj.value
    return obj


def detection_record(cps: ChangePointSet, profile: ScanProfile, epsilon: float, config: dict) -> dict:
    return {
        "n": profile.n,
        "G": profile.G,
        "alpha": profile.alpha,
        "epsilon": epsilon,
        "threshold": profile.threshold,
        "profile": profile.values,
        "change_points": [
            {"index": k, "block_start": b.start, "block_end": b.end, "peak": b.peak}
            for k, b in zip(cps.estimates, cps.blocks)
        ],
        "config": config,
    }


def multiscale_record(cps: ChangePointSet, cpi, trajectories, min_traj_len: int, config: dict) -> dict:
    marks = np.argwhere(cpi.marks)
    return {
        "g_grid": list(cpi.g_grid),
        "marks": [[int(l), int(c) + 1] for l, c in marks],
        "trajectories": [
            {
                "batch": t.batch,
                "points": [[i, G] for i, G in t.sorted_points()],
                "aggregate": aggregate_trajectory(t, min_traj_len),
            }
            for t in trajectories
        ],
        "merged": list(cps.estimates),
        "config": config,
    }


def dump_json(record: dict) -> str:
    return json.dumps(to_jsonable(record), indent=2, allow_nan=False) + "\n"
