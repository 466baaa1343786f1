"""Trial logs on disk: one CSV per trial plus a JSON sidecar describing how to rescore it."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import RecordParseError
from .swarm import DimpleEvent, TrialRecord

COLUMNS = ["time", "agent_id", "x", "y", "heading", "u1", "u2", "collided", "dimple", "ergodic_metric", "heterogeneity"]


def _f(v: float) -> str:
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def write_record_csv(record: TrialRecord, path) -> Path:
    """One row per (step, agent); team metrics repeat across a step's rows."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for s in range(record.n_steps):
            t = _f(record.times[s])
            erg = _f(record.ergodic_metric[s])
            het = _f(record.heterogeneity[s])
            for a in range(record.n_agents):
                x, y = record.positions[s, a]
                u1, u2 = record.controls[s, a]
                w.writerow([t, a, _f(x), _f(y), _f(record.headings[s, a]), _f(u1), _f(u2),
                            int(record.collided[s, a]), int(record.dimple_flags[s, a]), erg, het])
    return path


def meta_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".json")


def write_meta(csv_path, meta: dict) -> Path:
    p = meta_path(csv_path)
    p.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return p


def read_meta(csv_path) -> dict:
    p = meta_path(csv_path)
    if not p.is_file():
        return {}
    return json.loads(p.read_text())


def read_record_csv(path, dt: float | None = None) -> TrialRecord:
    """Parse a trial CSV back into a TrialRecord (events not stored in the CSV are empty)."""
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise RecordParseError(path, 0, str(exc)) from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != COLUMNS:
            raise RecordParseError(path, 1, f"expected header {','.join(COLUMNS)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(COLUMNS):
                raise RecordParseError(path, lineno, f"expected {len(COLUMNS)} fields, got {len(row)}")
            try:
                parsed = (
                    float(row[0]), int(row[1]), float(row[2]), float(row[3]), float(row[4]),
                    float(row[5]), float(row[6]), int(row[7]), int(row[8]),
                    float(row[9]) if row[9] else math.nan, float(row[10]) if row[10] else math.nan,
                )
            except ValueError as exc:
                raise RecordParseError(path, lineno, str(exc)) from None
            if parsed[7] not in (0, 1) or parsed[8] not in (0, 1):
                raise RecordParseError(path, lineno, "collided and dimple must be 0 or 1")
            rows.append((lineno, parsed))

    n_agents = 0
    for _, r in rows:
        if r[1] != n_agents:
            break
        n_agents += 1
    n_agents = max(n_agents, 1) if rows else int(read_meta(path).get("n_agents", 0))
    if len(rows) % max(n_agents, 1):
        raise RecordParseError(path, rows[-1][0], f"row count {len(rows)} is not a multiple of {n_agents} agents")
    n_steps = len(rows) // n_agents if n_agents else 0
    arr = np.array([r for _, r in rows], dtype=float).reshape(n_steps, n_agents, len(COLUMNS)) if rows else \
        np.zeros((0, n_agents, len(COLUMNS)))
    for s in range(n_steps):
        ids = arr[s, :, 1]
        if not np.array_equal(ids, np.arange(n_agents)) or np.any(arr[s, :, 0] != arr[s, 0, 0]):
            lineno = rows[s * n_agents][0]
            raise RecordParseError(path, lineno, "rows of a step must list agents 0..N-1 at one time")
    times = arr[:, 0, 0] if n_steps else np.zeros(0)
    if dt is None:
        dt = float(read_meta(path).get("dt", times[0] if n_steps else 0.1))
    dimples = [
        DimpleEvent((float(arr[s, a, 2]), float(arr[s, a, 3])), float(times[s]), a, s + 1)
        for s in range(n_steps)
        for a in range(n_agents)
        if arr[s, a, 8]
    ]
    return TrialRecord(
        dt=dt,
        n_agents=n_agents,
        times=times,
        positions=arr[:, :, 2:4].copy(),
        headings=arr[:, :, 4].copy(),
        controls=arr[:, :, 5:7].copy(),
        collided=arr[:, :, 7].astype(bool),
        dimple_flags=arr[:, :, 8].astype(bool),
        ergodic_metric=arr[:, 0, 9].copy() if n_steps else np.zeros(0),
        heterogeneity=arr[:, 0, 10].copy() if n_steps else np.zeros(0),
        dimples=dimples,
        collisions=[],
        decorrelations=[],
        snapshot_steps=np.zeros(0, dtype=int),
        snapshots=np.zeros((0, n_agents, 0)),
        final_coeffs=np.zeros((n_agents, 0)),
        meta=read_meta(path),
    )
