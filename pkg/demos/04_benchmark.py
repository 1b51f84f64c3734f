"""
The committed-seed benchmark
============================

Five subjects, T = 100, FC-LSTM (2 layers, 128 units) against a single
256-unit LSTM, an RBF SVM and the rule baseline.  Roughly 16 minutes on one
CPU core.  Pass a directory to keep scores, ROC curves and models.
"""
import sys
import time

from gaitstab import experiment as E

run_dir = sys.argv[1] if len(sys.argv) > 1 else None
t0 = time.time()

def show(fold, rows):
    print(fold, "  ".join(f"{r.method} acc {r.accuracy:.3f}" for r in rows), flush=True)


res = E.run_experiment(E.ExperimentConfig(), run_dir=run_dir, progress=show)
print(E.format_table(res))
print(f"total {(time.time() - t0) / 60:.1f} min")
