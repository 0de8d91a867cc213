"""Bayesian logistic regression on the diabetes data with all three methods.

Uses the bundled copy of diabetes_scale, so no network is needed.  Writes
per-iteration CSVs, a summary and plot series under ./runs/diabetes-demo.
This takes about a minute.

Run:  python3 demos/03_diabetes.py
"""
import tempfile
from pathlib import Path

from ngvi.data import seed_cache
from ngvi.harness import load_config, run_experiment

bundled = Path(__file__).resolve().parents[1] / "tests" / "data" / "diabetes_scale"
with tempfile.TemporaryDirectory() as cache:
    seed_cache("diabetes", bundled, cache)
    res = run_experiment(load_config("diabetes"), out_dir="runs/diabetes-demo",
                         cache_dir=cache, offline=True)

print(f"{'method':>6} {'iters':>6} {'neg ELBO':>10} {'test NLL':>9} {'acc':>6}")
for row in res.summary:
    print(f"{row['method']:>6} {row['iterations']:>6d} {row['neg_elbo']:>10.3f} "
          f"{row['test_nll']:>9.3f} {row['test_accuracy']:>6.3f}")
print(f"\noutputs in {res.out_dir}")
