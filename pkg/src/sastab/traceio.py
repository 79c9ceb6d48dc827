"""Trace and summary serialization.

Traces are CSV with the fixed header

    n,a,g,a_eff,W,scaled,y0,...,y{d-1}

one row per recorded step, floats written as their shortest round-trip
decimal (repr), `scaled` as 0/1 for g > 1. Noise draws and the terminal
state are not stored; reading a trace back gives a Trajectory with
noise=None and terminal=None, and analysis.reconstruct_noise can recover
the draws from consecutive states when needed.

Summaries are JSON: a per-seed list of {seed, sup_norm, overflow,
last_scaled, terminal_W} plus aggregates {overflow_rate, max_sup_norm,
max_last_scaled, descent_violations}. JSON has no spelling for non-finite
numbers, so inf and nan serialize as null; an overflowed run is recognized
by its `overflow` flag, not by its sup_norm.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .engine import RunSummary, Trajectory
from .errors import IncompleteTraceError

Array = np.ndarray

_FIXED_COLUMNS = ("n", "a", "g", "a_eff", "W", "scaled")


def trace_header(dimension: int) -> list[str]:
    return list(_FIXED_COLUMNS) + [f"y{i}" for i in range(dimension)]


def write_trace(traj: Trajectory, path: str | Path) -> None:
    """Write one trajectory as CSV; floats survive a read back bit-exact."""
    d = traj.dimension
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(trace_header(d))
        for n, a, g, a_eff, wv, y in traj.rows():
            row = [str(n), repr(a), repr(g), repr(a_eff), repr(wv), str(int(g > 1.0))]
            row.extend(repr(float(v)) for v in y)
            w.writerow(row)


def read_trace(
    path: str | Path,
    problem: str = "",
    mode: str = "",
    seed: int = -1,
) -> Trajectory:
    """Read a trace written by write_trace.

    The CSV carries no run metadata, so problem/mode/seed default to
    placeholders unless supplied by the caller (the analyze command passes
    them from its config).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IncompleteTraceError(f"{path}: empty trace file") from None
        if header[: len(_FIXED_COLUMNS)] != list(_FIXED_COLUMNS):
            raise IncompleteTraceError(
                f"{path}: expected header to start with "
                f"{','.join(_FIXED_COLUMNS)}, got {','.join(header)}"
            )
        ycols = header[len(_FIXED_COLUMNS) :]
        d = len(ycols)
        if d < 1 or ycols != [f"y{i}" for i in range(d)]:
            raise IncompleteTraceError(
                f"{path}: state columns must be y0..y{{d-1}}, got {ycols}"
            )
        a, g, a_eff, W, ys = [], [], [], [], []
        for i, row in enumerate(reader):
            if len(row) != len(header):
                raise IncompleteTraceError(
                    f"{path}: row {i} has {len(row)} fields, expected {len(header)}"
                )
            try:
                n = int(row[0])
                vals = [float(v) for v in row[1:]]
            except ValueError as ex:
                raise IncompleteTraceError(f"{path}: row {i}: {ex}") from None
            if n != i:
                raise IncompleteTraceError(
                    f"{path}: row {i} is numbered {n}; rows must be consecutive"
                )
            a.append(vals[0])
            g.append(vals[1])
            a_eff.append(vals[2])
            W.append(vals[3])
            ys.append(vals[5:])
    if not a:
        raise IncompleteTraceError(f"{path}: trace has a header but no rows")
    return Trajectory(
        problem=problem,
        mode=mode,
        seed=seed,
        a=np.array(a),
        g=np.array(g),
        a_eff=np.array(a_eff),
        W=np.array(W),
        y=np.array(ys),
        noise=None,
        terminal=None,
    )


# ---------------------------------------------------------------------------
# summaries


def _json_num(v) -> float | None:
    """Non-finite numbers have no JSON spelling; emit null."""
    if v is None:
        return None
    f = float(v)
    return f if math.isfinite(f) else None


def summary_document(summaries: Sequence[RunSummary]) -> dict:
    """The JSON-ready form of an ensemble's summaries."""
    if not summaries:
        raise ValueError("no summaries to write")
    per_seed = []
    for s in summaries:
        rec = {
            "seed": s.seed,
            "sup_norm": _json_num(s.sup_norm),
            "overflow": bool(s.overflowed),
            "last_scaled": s.last_scaled,
            "terminal_W": _json_num(s.terminal_W),
        }
        if s.descent_violations is not None:
            rec["descent_violations"] = s.descent_violations
        if s.error is not None:
            rec["error"] = s.error
        per_seed.append(rec)

    n = len(summaries)
    overflow_rate = sum(1 for s in summaries if s.overflowed) / n
    sups = [s.sup_norm for s in summaries if not math.isnan(s.sup_norm)]
    max_sup = max(sups) if sups else math.nan
    scaled = [s.last_scaled for s in summaries if s.last_scaled is not None]
    violations = [s.descent_violations for s in summaries]
    counted = [v for v in violations if v is not None]
    return {
        "per_seed": per_seed,
        "aggregates": {
            "overflow_rate": overflow_rate,
            "max_sup_norm": _json_num(max_sup),
            "max_last_scaled": max(scaled) if scaled else None,
            "descent_violations": sum(counted) if counted else None,
        },
    }


def summarize(summaries: Sequence[RunSummary], path: str | Path) -> None:
    """Write the ensemble summary JSON."""
    doc = summary_document(summaries)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, allow_nan=False)
        fh.write("\n")
