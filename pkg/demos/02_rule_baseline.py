"""
How far do the labelling rules get on their own?
================================================

The rule-based detector applies the same geometry as the labeller, but
to the tracked CoM and the observed legs.  On clean streams it is exact;
with realistic sensor noise it drops well below 100%.
"""
from gaitstab import experiment as E

base = E.ExperimentConfig(subjects=3, methods=("rule",))

for noiseless in (True, False):
    res = E.run_experiment(base.replace(noiseless=noiseless))
    row = res.mean_row("rule")
    tag = "noiseless" if noiseless else "noisy"
    print(f"{tag:<10s} accuracy {row.accuracy:.4f}  F-score {row.fscore:.4f}  "
          f"recall {row.recall:.4f}  precision {row.precision:.4f}")
