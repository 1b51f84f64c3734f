"""Command-line front end.

    python3 -m gaitstab simulate   --out data/episodes
    python3 -m gaitstab track      data/episodes --out data/datasets
    python3 -m gaitstab experiment --simulate --out runs
    python3 -m gaitstab experiment --data data/episodes --methods rule,svm
    python3 -m gaitstab roc-export runs/benchmark
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiment as E
from . import metrics as M
from .config import ConfigParseError, load_config, parse_methods
from .data import write_sequence_csv
from .nn.network import ARCHITECTURES
from .sim import ConfigError, load_episode, save_episode

logger = logging.getLogger("gaitstab")

EPISODE_SUFFIX = ".episode.jsonl"
DATASET_SUFFIX = ".dataset.csv"


def _common(parser):
    parser.add_argument("--config", type=Path, help="flat key = value config file")
    parser.add_argument("--seed", type=int, help="global seed (overrides the config)")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    ap = argparse.ArgumentParser(prog="gaitstab", description="Gait stability prediction pipeline")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write one synthetic episode per subject")
    _common(p)

    p = sub.add_parser("track", help="UKF-track and label episodes into per-tick datasets")
    _common(p)
    p.add_argument("episodes", type=Path, help="directory of *.episode.jsonl files (or one file)")

    p = sub.add_parser("experiment", help="leave-one-subject-out comparison")
    _common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--simulate", action="store_true", help="simulate the cohort in memory")
    src.add_argument("--data", type=Path, help="directory of *.episode.jsonl files")
    p.add_argument("--name", help="run name (directory under --out)")
    p.add_argument("--methods", help="comma list of rule, svm, lstm, fc-lstm, or 'all'")
    p.add_argument("--window", type=int, choices=(50, 100, 200))
    p.add_argument("--arch", choices=tuple(ARCHITECTURES))
    p.add_argument("--epochs", type=int, help="training epochs (overrides train.epochs)")

    p = sub.add_parser("roc-export", help="rebuild roc.csv files from a run's per-frame scores")
    _common(p)
    p.add_argument("run", type=Path, help="run directory (runs/<name>)")
    p.add_argument("--methods", help="restrict to these methods")
    return ap


def resolve_config(args):
    cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    for key in ("window", "arch", "name"):
        value = getattr(args, key, None)
        if value is not None:
            changes[key] = value
    if getattr(args, "methods", None):
        changes["methods"] = parse_methods(args.methods)
    if getattr(args, "epochs", None) is not None:
        changes["train"] = dataclasses.replace(cfg.train, epochs=args.epochs)
    return cfg.replace(**changes)


def _episode_paths(path):
    path = Path(path)
    if path.is_file():
        return [path]
    paths = sorted(path.glob("*" + EPISODE_SUFFIX))
    if not paths:
        raise FileNotFoundError(f"no *{EPISODE_SUFFIX} files in {path}")
    return paths


def cmd_simulate(cfg, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for ep in E.generate_cohort(cfg):
        written.append(save_episode(ep, out / f"{ep.subject_id}{EPISODE_SUFFIX}"))
    return written


def cmd_track_and_label(episodes, cfg, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for path in _episode_paths(episodes):
        seq = E.track_and_label(load_episode(path), cfg)
        written.append(write_sequence_csv(out / f"{seq.subject_id}{DATASET_SUFFIX}", seq))
    return written


def cmd_experiment(cfg, out, data=None, progress=None):
    """Run the comparison; returns (result, run directory)."""
    sequences = None
    if data is not None:
        sequences = [E.track_and_label(load_episode(p), cfg) for p in _episode_paths(data)]
    run_dir = Path(out) / cfg.name
    result = E.run_experiment(cfg, sequences=sequences, run_dir=run_dir, progress=progress)
    return result, run_dir


def cmd_roc_export(run_dir, methods=None):
    run_dir = Path(run_dir)
    written = []
    for scores in sorted(run_dir.glob("*/*/scores.csv")):
        method = scores.parent.parent.name
        if methods and method not in methods:
            continue
        with open(scores, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or rows[0]["score"] == "":
            continue  # hard-label method: no threshold to sweep
        s = np.array([float(r["score"]) for r in rows])
        y = np.array([int(r["label"]) for r in rows])
        if y.min() == y.max():
            logger.warning("%s: one class only, no ROC", scores)
            continue
        curve, _ = M.roc_auc(s, y)
        path = scores.with_name("roc.csv")
        M.write_roc_csv(path, curve)
        written.append(path)
    if not written:
        raise FileNotFoundError(f"no scored runs under {run_dir}")
    return written


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "simulate":
            for p in cmd_simulate(cfg, args.out or Path("episodes")):
                print(p)
        elif args.command == "track":
            for p in cmd_track_and_label(args.episodes, cfg, args.out or Path("datasets")):
                print(p)
        elif args.command == "experiment":
            def progress(fold, rows):
                logger.info("fold %s: %s", fold, ", ".join(f"{r.method} auc={r.auc:.3f}" for r in rows))
            result, run_dir = cmd_experiment(cfg, args.out or Path("runs"), args.data, progress)
            print(E.format_table(result), end="")
            print(f"report: {run_dir / 'report.csv'}")
        elif args.command == "roc-export":
            methods = parse_methods(args.methods) if args.methods else None
            for p in cmd_roc_export(args.run, methods):
                print(p)
    except (ConfigParseError, ConfigError, OSError, ValueError) as exc:
        print(f"gaitstab {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
