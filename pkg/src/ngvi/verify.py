"""Theory verification suite: randomized certificates and rate fits."""

import time
from dataclasses import dataclass, field

import numpy as np

from . import studies
from .theory import build_vectorization, vec, vech

LEVELS = {
    "fast": dict(max_dim=4, draws=50, flow_T=2.0, inv_T=1.0),
    "full": dict(max_dim=8, draws=500, flow_T=5.0, inv_T=5.0),
}

EXIT_OK, EXIT_FAILURE, EXIT_UNDERSAMPLED = 0, 1, 2


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    skipped: int = 0
    seconds: float = 0.0


@dataclass
class VerificationReport:
    level: str
    checks: list = field(default_factory=list)
    undersampled: bool = False

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    @property
    def exit_code(self):
        if not self.passed:
            return EXIT_FAILURE
        return EXIT_UNDERSAMPLED if self.undersampled else EXIT_OK

    def lines(self):
        out = []
        for c in self.checks:
            tag = "PASS" if c.passed else "FAIL"
            skip = f" [{c.skipped} out-of-hypothesis skipped]" if c.skipped else ""
            out.append(f"{tag}  {c.name:<22} {c.detail}{skip} ({c.seconds:.2f}s)")
        return out


def _vectorization_check(max_dim, rng):
    worst = 0.0
    for d in range(1, max_dim + 1):
        ops = build_vectorization(d)
        for _ in range(5):
            A = rng.standard_normal((d, d))
            worst = max(worst, np.max(np.abs(ops.K @ vec(A) - vec(A.T))),
                        np.max(np.abs(ops.L @ vec(A) - vech(A))))
        worst = max(worst, np.max(np.abs(ops.L @ ops.L.T - np.eye(ops.L.shape[0]))))
        ev = np.linalg.eigvalsh(ops.L @ ops.N @ ops.L.T)
        if ev.min() < 0.5 - 1e-12 or ev.max() > 1 + 1e-12:
            worst = max(worst, 1.0)
    return worst < 1e-12, f"max identity residual {worst:.1e}"


def verify_suite(level="fast", seed=0):
    """Run every check at the given level and collect the outcomes."""
    if level not in LEVELS:
        raise ValueError(f"level must be one of {sorted(LEVELS)}")
    p = LEVELS[level]
    rng = np.random.default_rng(seed)
    report = VerificationReport(level)

    def timed(name, fn):
        t0 = time.perf_counter()
        res = fn()
        res.seconds = time.perf_counter() - t0
        res.name = name
        report.checks.append(res)

    def vectorization():
        ok, msg = _vectorization_check(p["max_dim"], rng)
        return CheckResult("", ok, msg)

    def sweep():
        r = studies.certificate_sweep(p["draws"], p["max_dim"], seed=seed)
        if r.in_hypothesis < p["draws"]:
            report.undersampled = True
        return CheckResult("", r.passed,
                           f"{r.in_hypothesis} states: {r.bound_violations} eigenvalue-bound, "
                           f"{r.pl_violations} PL violations; worst natural-direction gap "
                           f"{r.worst_direction_gap:.1e} ({r.direction_failures} failures)",
                           skipped=r.out_of_hypothesis)

    def neumann():
        r = studies.neumann_study(d=min(4, p["max_dim"]), seed=seed)
        return CheckResult("", r.ok, f"fitted order {r.order:.3f}, gap ratios "
                           + ", ".join(f"{x:.3f}" for x in r.ratios))

    def one_step():
        r = studies.vn_one_step()
        return CheckResult("", r.passed, f"{r.iterations} iteration(s), residuals "
                           f"{r.mean_residual:.1e} / {r.cov_residual:.1e}")

    def flow():
        r = studies.flow_rate_study(T=p["flow_T"])
        return CheckResult("", r.passed, f"worst gap/bound ratio {r.worst_ratio:.4f}, "
                           f"fitted slope {r.slope:.3f} vs bound {r.bound_slope:.3f}")

    def invariance():
        r = studies.invariance_study(T=p["inv_T"], seed=seed)
        return CheckResult("", r.passed, f"max covariance gap {r.max_cov_gap:.1e}, "
                           f"euler equals SR-VN: {r.euler_exact}")

    def contraction():
        r = studies.contraction_study()
        return CheckResult("", r.certified and r.contraction_ok,
                           f"rate {r.contraction:.5f}, worst observed {r.worst_ratio:.5f}, "
                           f"{r.violations} violations, constants certified: {r.certified}")

    timed("vectorization", vectorization)
    timed("fim-and-pl-sweep", sweep)
    timed("neumann-order", neumann)
    timed("vn-one-step", one_step)
    timed("flow-rate", flow)
    timed("flow-invariance", invariance)
    timed("srvn-contraction", contraction)
    return report
