"""Four optimizers on a 2-D Bayesian linear regression.

The posterior is Gaussian, so the exact answer is known.  VN with a unit
step lands on it in one iteration; SR-VN follows the same path with small
steps; BW-GD and plain GD need many more iterations.

Run:  python3 demos/01_toy_regression.py
"""
import numpy as np

from ngvi import GaussianParams, StepConfig, run_optimizer
from ngvi.studies import optimal_value, toy_regression

problem = toy_regression()
m_star, V_star = problem.optimum()
l_star = optimal_value(problem)
init = GaussianParams([3.0, -2.0], 2.0 * np.eye(2))
print(f"exact posterior mean {m_star.round(4)}, optimal objective {l_star:.6f}\n")

steps = {"vn": 1.0, "srvn": 0.005, "bwgd": 0.01, "gd": 0.01}
print(f"{'method':>6} {'step':>6} {'iters':>6} {'final gap':>11} {'|V - V*|':>10}")
for method, rho in steps.items():
    rec = run_optimizer(method, init, problem, step_cfg=StepConfig(rho=rho, max_iters=20000))
    gap = rec.column("neg_elbo")[-1] - l_star
    err = np.linalg.norm(rec.final.cov - V_star)
    print(f"{method:>6} {rho:>6g} {rec.iterations:>6d} {gap:>11.2e} {err:>10.2e}")
