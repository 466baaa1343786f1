"""Command-line entry point: ``ergopattern run|batch|render|analyze``."""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

from . import batch, records
from .config import ExperimentConfig, load_config
from .errors import ErgoPatternError
from .render import render


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int, help="trial seed (batch: first seed)")
    p.add_argument("--comm", action="append", choices=["none", "full"], help="communication mode (repeatable)")
    p.add_argument("--target", action="append", help="built-in target name or PGM path (repeatable)")
    p.add_argument("--agents", type=int, help="team size")
    p.add_argument("--duration", type=float, help="simulated seconds per trial")
    p.add_argument("--out", help="output directory")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config field")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ergopattern", description="Decentralized ergodic coverage for surface patterning.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one trial")
    _common(run)
    run.add_argument("--no-render", action="store_true", help="skip image output")

    b = sub.add_parser("batch", help="seeded trials for every target and comm mode")
    _common(b)
    b.add_argument("--trials", type=int)
    b.add_argument("--jobs", type=int, help="worker processes")

    r = sub.add_parser("render", help="render images from trial CSVs")
    r.add_argument("records", nargs="+", type=Path)
    r.add_argument("--size", type=int, default=256)
    r.add_argument("--out", type=Path, help="output directory (default: next to each record)")

    a = sub.add_parser("analyze", help="rescore trial CSVs from trajectories and dimples")
    a.add_argument("records", nargs="+", type=Path)
    a.add_argument("--out", type=Path, help="metrics CSV path (default: stdout)")
    return parser


def config_from_args(args) -> ExperimentConfig:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ErgoPatternError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k] = v
    for name in ("seed", "agents", "duration", "out", "trials", "jobs"):
        v = getattr(args, name, None)
        if v is not None:
            overrides[name] = str(v)
    if args.comm:
        overrides["comm"] = ",".join(args.comm)
    if args.target:
        overrides["targets"] = ",".join(args.target)
    return load_config(args.config, overrides)


def _cmd_run(args) -> int:
    cfg = config_from_args(args)
    row = batch.run_one(cfg, cfg.targets[0], cfg.comm[0], cfg.seed, cfg.out, render_images=not args.no_render)
    print(f"{row['objective']} comm={row['condition']} seed={row['seed']}: "
          f"ergodic={row['final_ergodic_metric']:.6g} heterogeneity={row['heterogeneity']:.6g} "
          f"performance={row['performance']:.6g} dimples={row['dimples']} collisions={row['collisions']}")
    print(Path(cfg.out) / row["record"])
    return 0


def _cmd_batch(args) -> int:
    cfg = config_from_args(args)
    report = batch.run_batch(cfg)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(batch.SUMMARY_COLUMNS)
    for r in report.summary:
        w.writerow([batch._fmt(r[c]) for c in batch.SUMMARY_COLUMNS])
    return 0


def _cmd_render(args) -> int:
    for path in args.records:
        record = records.read_record_csv(path)
        meta = record.meta
        target = None
        if "target" in meta:
            cfg = ExperimentConfig()
            target, _, _ = batch._target(meta["target"], tuple(meta.get("extents", cfg.extents)),
                                         int(meta.get("resolution", cfg.resolution)),
                                         bool(meta.get("invert", False)), int(meta.get("modes", cfg.modes)))
        out = args.out or path.parent
        for p in render(record, target, args.size, out, path.stem).values():
            print(p)
    return 0


def _cmd_analyze(args) -> int:
    rows = batch.analyze(args.records, args.out)
    if args.out is None:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(batch.ANALYZE_COLUMNS)
        for r in rows:
            w.writerow([batch._fmt(r[c]) for c in batch.ANALYZE_COLUMNS])
    return 0


COMMANDS = {"run": _cmd_run, "batch": _cmd_batch, "render": _cmd_render, "analyze": _cmd_analyze}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ErgoPatternError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
