"""Trial orchestration: single runs, seeded batches and offline rescoring of logs."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import records
from .config import ExperimentConfig, to_text
from .errors import ErgoPatternError, UndefinedDistributionError
from .metrics import team_heterogeneity, trial_performance
from .render import render
from .spectral import SpectralBasis, TrajectoryStats, transform_density
from .swarm import TrialRecord, run_trial
from .targets import objective_name, resolve_target

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = ["condition", "objective", "median_heterogeneity", "median_performance", "trials"]
TRIAL_COLUMNS = ["objective", "condition", "seed", "heterogeneity", "performance", "final_ergodic_metric",
                 "dimples", "collisions", "record"]
ANALYZE_COLUMNS = ["record", "agents", "steps", "ergodic_metric", "heterogeneity", "performance",
                   "logged_ergodic_metric", "logged_heterogeneity"]


class BatchError(ErgoPatternError, RuntimeError):
    def __init__(self, seed: int, objective: str, condition: str, cause: Exception):
        super().__init__(f"trial failed (objective={objective}, comm={condition}, seed={seed}): {cause}")
        self.seed = seed


@lru_cache(maxsize=16)
def _target(spec: str, extents: tuple, resolution: int, invert: bool, modes: int):
    density = resolve_target(spec, extents, resolution, invert)
    basis = SpectralBasis(extents, modes)
    return density, basis, transform_density(basis, density)


def target_for(cfg: ExperimentConfig, spec: str):
    """(density, basis, target coefficients) for one objective of ``cfg``."""
    return _target(spec, tuple(cfg.extents), cfg.resolution, cfg.invert, cfg.modes)


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def score(record: TrialRecord, phi, basis: SpectralBasis, sigma: float = 0.0) -> tuple[float, float]:
    """(team heterogeneity of final statistics, dimple performance); NaN where undefined."""
    het = team_heterogeneity(record.final_coeffs, basis) if record.n_agents >= 2 and record.n_steps else math.nan
    try:
        perf = trial_performance(record, phi, basis, sigma)
    except UndefinedDistributionError:
        perf = math.nan
    return het, perf


def run_one(cfg: ExperimentConfig, spec: str, mode: str, seed: int, out_dir=None, render_images: bool = True) -> dict:
    """Run and (optionally) persist one trial; returns its summary row."""
    density, basis, phi = target_for(cfg, spec)
    record = run_trial(cfg.world(), cfg.control(), cfg.comm_config(mode), phi, basis, seed)
    objective = objective_name(spec)
    record.meta.update(
        target=spec, objective=objective, dt=cfg.dt, extents=list(cfg.extents), modes=cfg.modes,
        resolution=cfg.resolution, invert=cfg.invert, dimple_sigma=cfg.dimple_sigma,
    )
    het, perf = score(record, phi, basis, cfg.dimple_sigma)
    row = {
        "objective": objective, "condition": mode, "seed": seed, "heterogeneity": het, "performance": perf,
        "final_ergodic_metric": float(record.ergodic_metric[-1]) if record.n_steps else math.nan,
        "dimples": len(record.dimples), "collisions": len(record.collisions), "record": "",
    }
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = f"{objective}_{mode}_seed{seed:04d}"
        csv_path = records.write_record_csv(record, out_dir / f"{stem}.csv")
        records.write_meta(csv_path, record.meta)
        if render_images and record.n_steps:
            render(record, density, cfg.render_size, out_dir, stem)
        row["record"] = csv_path.name
    row["_record"] = record
    return row


def _job(args):
    cfg, spec, mode, seed, out_dir = args
    try:
        row = run_one(cfg, spec, mode, seed, out_dir)
    except Exception as exc:  # surfaced with the failing seed
        raise BatchError(seed, objective_name(spec), mode, exc) from exc
    row.pop("_record")
    return row


@dataclass
class BatchReport:
    trials: list[dict]
    summary: list[dict]
    out_dir: Path | None = None
    paths: dict[str, Path] = field(default_factory=dict)


def summarize(rows: list[dict]) -> list[dict]:
    """Per-(condition, objective) medians; independent of trial order."""
    groups: dict[tuple[str, str], list[dict]] = {}
    for r in rows:
        groups.setdefault((r["condition"], r["objective"]), []).append(r)
    out = []
    for (cond, obj) in sorted(groups):
        g = groups[(cond, obj)]
        het = [r["heterogeneity"] for r in g if not math.isnan(r["heterogeneity"])]
        perf = [r["performance"] for r in g if not math.isnan(r["performance"])]
        out.append({
            "condition": cond, "objective": obj,
            "median_heterogeneity": float(np.median(het)) if het else math.nan,
            "median_performance": float(np.median(perf)) if perf else math.nan,
            "trials": len(g),
        })
    return out


def _write_csv(path: Path, columns, rows) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])
    return path


def run_batch(cfg: ExperimentConfig, out_dir=None, write: bool = True) -> BatchReport:
    """Run ``cfg.trials`` seeds for every (objective, comm mode) pair.

    Seeds run ``cfg.seed .. cfg.seed + trials - 1`` and are shared across
    conditions. Stops at the first failing trial.
    """
    cfg.validate()
    out = Path(out_dir if out_dir is not None else cfg.out) if write else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    jobs = [
        (cfg, spec, mode, seed, out)
        for spec in cfg.targets
        for mode in cfg.comm
        for seed in range(cfg.seed, cfg.seed + cfg.trials)
    ]
    log.info("running %d trials on %d worker(s)", len(jobs), cfg.jobs)
    rows = []
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            futures = [pool.submit(_job, j) for j in jobs]
            try:
                for f in futures:
                    rows.append(f.result())
            except BaseException:
                for f in futures:
                    f.cancel()
                raise
    else:
        for j in jobs:
            rows.append(_job(j))
            log.debug("finished %s/%s seed %d", rows[-1]["objective"], rows[-1]["condition"], rows[-1]["seed"])
    report = BatchReport(trials=rows, summary=summarize(rows), out_dir=out)
    if out is not None:
        report.paths["trials"] = _write_csv(out / "trials.csv", TRIAL_COLUMNS, rows)
        report.paths["summary"] = _write_csv(out / "summary.csv", SUMMARY_COLUMNS, report.summary)
        (out / "config.txt").write_text(to_text(cfg))
    return report


def recompute_stats(record: TrialRecord, basis: SpectralBasis) -> list[TrajectoryStats]:
    """Per-agent trajectory statistics rebuilt from logged positions."""
    stats = [TrajectoryStats.empty(basis) for _ in range(record.n_agents)]
    for s in range(record.n_steps):
        F = basis.values(record.positions[s])
        for a, st in enumerate(stats):
            st.add(F[a], record.dt)
    return stats


def analyze_record(path, cfg: ExperimentConfig | None = None) -> dict:
    """Rescore one trial CSV from its trajectories and dimples alone."""
    path = Path(path)
    record = records.read_record_csv(path)
    meta = record.meta
    cfg = cfg or ExperimentConfig()
    spec = meta.get("target", cfg.targets[0])
    extents = tuple(meta.get("extents", cfg.extents))
    density, basis, phi = _target(spec, extents, int(meta.get("resolution", cfg.resolution)),
                                  bool(meta.get("invert", cfg.invert)), int(meta.get("modes", cfg.modes)))
    stats = recompute_stats(record, basis)
    row = {"record": path.name, "agents": record.n_agents, "steps": record.n_steps,
           "ergodic_metric": math.nan, "heterogeneity": math.nan, "performance": math.nan,
           "logged_ergodic_metric": math.nan, "logged_heterogeneity": math.nan}
    if record.n_steps:
        pooled = TrajectoryStats.pooled(stats).coefficients
        row["ergodic_metric"] = float(basis.weights @ (pooled - phi) ** 2)
        row["logged_ergodic_metric"] = float(record.ergodic_metric[-1])
        row["logged_heterogeneity"] = float(record.heterogeneity[-1])
        if record.n_agents >= 2:
            row["heterogeneity"] = team_heterogeneity(np.array([s.coefficients for s in stats]), basis)
    if record.dimples:
        row["performance"] = trial_performance(record, phi, basis, float(meta.get("dimple_sigma", cfg.dimple_sigma)))
    return row


def analyze(paths, out_csv=None, cfg: ExperimentConfig | None = None) -> list[dict]:
    rows = [analyze_record(p, cfg) for p in paths]
    if out_csv is not None:
        _write_csv(Path(out_csv), ANALYZE_COLUMNS, rows)
    return rows
