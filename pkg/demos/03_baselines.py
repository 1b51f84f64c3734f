"""
Leave-one-subject-out comparison on a small cohort
==================================================

Three subjects, two-minute walks and three training epochs keep this to
a few minutes.  Each fold trains on two subjects (plus their augmented copies)
and scores every frame of the held-out one.  ``--epochs`` and ``--subjects``
scale it up; the defaults of ``ExperimentConfig`` are the full benchmark.
"""
import argparse

from gaitstab import experiment as E
from gaitstab.nn.training import TrainConfig
from gaitstab.sim import SimConfig

parser = argparse.ArgumentParser()
parser.add_argument("--subjects", type=int, default=3)
parser.add_argument("--epochs", type=int, default=3)
parser.add_argument("--duration", type=float, default=120.0)
parser.add_argument("--out", default=None, help="write the run directory here")
args = parser.parse_args()

cfg = E.ExperimentConfig(
    name="demo",
    subjects=args.subjects,
    sim=SimConfig(duration=args.duration, fall_risk_count=4),
    window=50,
    train=TrainConfig(epochs=args.epochs),
)


def show(fold, rows):
    print(fold, "  ".join(f"{r.method} acc {r.accuracy:.3f}" for r in rows), flush=True)


res = E.run_experiment(cfg, run_dir=args.out, progress=show)
print()
print(E.format_table(res))
for k, v in res.timings.items():
    print(f"{k:>6s} {v:7.1f} s")
