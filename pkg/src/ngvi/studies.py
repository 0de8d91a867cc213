"""Reference problems and the numerical studies built on them.

Each study returns a small result object with a ``passed`` flag and the
numbers behind it.  The verification suite, the acceptance tests and the
demo scripts all call these functions, so a given check is coded once.
"""

from dataclasses import dataclass, field

import numpy as np

from .flow import FlowConfig, integrate_flow, lyapunov_report, trajectory_constants
from .gaussian import GaussianParams, elbo, mv_to_params
from .oracles import OracleConfig, ProblemSpec, moments
from .optimizers import (
    StepConfig,
    TheoryConstants,
    curvature_bounds,
    iteration_estimate,
    permissible_step,
    run_optimizer,
)
from .theory import (
    assemble_fim_inverse,
    build_vectorization,
    check_lemma1,
    check_pl,
    mc_fim,
    natural_direction_gap,
    neumann_gap,
    random_state,
)

TIGHT = dict(grad_tol=1e-13, fixed_point_tol=1e-13)


def toy_regression(n=20, noise=1.0, seed=0):
    """Two-parameter Bayesian linear regression with a standard normal prior.

    The negative log joint is quadratic with A = X^T X / noise^2 + I and
    b = X^T y / noise^2, so the exact posterior is N(A^{-1} b, A^{-1}).
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    X = np.column_stack([x, 0.8 * x + 0.6 * rng.standard_normal(n)])
    y = X @ np.array([1.0, -0.5]) + noise * rng.standard_normal(n)
    A = X.T @ X / noise**2 + np.eye(2)
    b = X.T @ y / noise**2
    c = 0.5 * (y @ y) / noise**2
    return ProblemSpec.quadratic(A, b, c)


def spectral_quadratic(eigs=(1.0, 1.05, 1.1, 1.2), seed=0):
    """Quadratic with prescribed Hessian spectrum and a random rotation."""
    rng = np.random.default_rng(seed)
    d = len(eigs)
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    A = Q @ np.diag(eigs) @ Q.T
    return ProblemSpec.quadratic(A, rng.standard_normal(d))


def random_quadratic(rng, d, ridge=0.5):
    G = rng.standard_normal((d, d))
    return ProblemSpec.quadratic(G @ G.T / d + ridge * np.eye(d), rng.standard_normal(d))


def random_logistic(rng, n, d, beta=0.1):
    X = rng.standard_normal((n, d)) / np.sqrt(d)
    y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    return ProblemSpec.logistic(X, y, beta)


def optimal_value(problem):
    m, V = problem.optimum()
    return elbo(mv_to_params(m, V), problem)


# -- gradients ---------------------------------------------------------------

def fd_gradient_error(q, problem, cfg=None, h=1e-6):
    """Relative errors of the analytic mean and factor gradients.

    Central differences of the objective are taken in every mean entry and
    every lower-triangular entry of the factor, and compared with g and the
    lower triangle of (H - gamma V^{-1}) C.
    """
    mom = moments(q, problem, cfg)
    d = q.dim
    f = lambda m, C: elbo(GaussianParams(m, C), problem, cfg)
    fd_m = np.zeros(d)
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        fd_m[i] = (f(q.mean + e, q.chol) - f(q.mean - e, q.chol)) / (2 * h)
    rows, cols = np.tril_indices(d)
    fd_C = np.zeros((d, d))
    for i, j in zip(rows, cols):
        E = np.zeros((d, d))
        E[i, j] = h
        fd_C[i, j] = (f(q.mean, q.chol + E) - f(q.mean, q.chol - E)) / (2 * h)
    an_C = np.tril((mom.hess - problem.gamma * q.precision) @ q.chol)
    rel = lambda a, b: np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12)
    return rel(fd_m, mom.grad), rel(fd_C, an_C)


# -- one-step and Neumann checks ----------------------------------------------

@dataclass
class OneStepResult:
    mean_residual: float
    cov_residual: float
    iterations: int
    converged: bool
    passed: bool


def vn_one_step(problem=None, tol=1e-10):
    """VN with unit step from a generic start lands on the exact posterior."""
    problem = toy_regression() if problem is None else problem
    m_star, V_star = problem.optimum()
    init = GaussianParams(np.array([3.0, -2.0]), 2.0 * np.eye(2))
    rec = run_optimizer("vn", init, problem, None,
                        StepConfig(rho=1.0, gamma=1.0, max_iters=10, grad_tol=1e-9,
                                   fixed_point_tol=1e-9))
    q1 = rec.final
    rm = float(np.max(np.abs(q1.mean - m_star)))
    rv = float(np.max(np.abs(q1.cov - V_star)))
    ok = rec.iterations == 1 and rec.converged and rm < tol and rv < tol
    return OneStepResult(rm, rv, rec.iterations, rec.converged, ok)


def neumann_study(d=4, rhos=(1e-3, 5e-4, 2.5e-4), seed=0):
    rng = np.random.default_rng(seed)
    problem = random_quadratic(rng, d)
    q = random_state(rng, d)
    return neumann_gap(q, moments(q, problem), rhos)


# -- contraction of the objective gap ----------------------------------------

@dataclass
class ContractionResult:
    consts: TheoryConstants
    rho: float
    eta: float
    contraction: float
    gaps: np.ndarray
    worst_ratio: float
    violations: int
    iterations_to_eps: int
    estimate: float
    certified: bool
    contraction_ok: bool
    estimate_ok: bool

    @property
    def passed(self):
        return self.certified and self.contraction_ok and self.estimate_ok


def certified_constants(problem, init, pilot_rho=0.01, pilot_iters=3000, margin=0.01):
    """Constants measured on a slow pilot run, widened by ``margin``."""
    delta, M = curvature_bounds(problem)
    pilot = run_optimizer("srvn", init, problem, None,
                          StepConfig(rho=pilot_rho, max_iters=pilot_iters, **TIGHT))
    return TheoryConstants(delta=delta, M=M,
                           lambda_min=pilot.column("V_eig_min").min() * (1 - margin),
                           xi_l=pilot.column("C_frob").min() * (1 - margin),
                           xi_u=pilot.column("C_frob").max() * (1 + margin))


def within_constants(rec, consts):
    return bool(rec.column("V_eig_min").min() >= consts.lambda_min
                and rec.column("C_frob").min() >= consts.xi_l
                and rec.column("C_frob").max() <= consts.xi_u)


def contraction_study(problem=None, init=None, eps=1e-6, factor=3.0, max_iters=200000):
    """Run SR-VN at the theory step size and test the per-step contraction."""
    problem = spectral_quadratic() if problem is None else problem
    init = GaussianParams(np.zeros(problem.dim), 0.5 * np.eye(problem.dim)) if init is None else init
    consts = certified_constants(problem, init)
    sb = permissible_step(consts, rule="best")
    l_star = optimal_value(problem)
    rec = run_optimizer("srvn", init, problem, None,
                        StepConfig(rho=sb.rho, max_iters=max_iters, **TIGHT))
    gaps = rec.column("neg_elbo") - l_star
    floor = 1e-12 * max(1.0, abs(l_star))
    live = gaps[:-1] > floor
    ratios = gaps[1:][live] / gaps[:-1][live]
    excess = gaps[1:] - sb.contraction * gaps[:-1]
    violations = int(np.count_nonzero((excess > floor) & live))
    hit = np.flatnonzero(gaps <= eps)
    n_eps = int(hit[0]) if hit.size else -1
    est = iteration_estimate(consts, gaps[0], eps)
    est_ok = n_eps >= 0 and est / factor <= n_eps <= est * factor
    return ContractionResult(consts, sb.rho, sb.eta, sb.contraction, gaps,
                             float(ratios.max()) if ratios.size else 0.0, violations, n_eps,
                             est, within_constants(rec, consts), violations == 0, est_ok)


# -- biased oracle ------------------------------------------------------------

@dataclass
class PlateauResult:
    plateau: float
    term: float
    corrected_bound: float
    rho: float
    omega_m: float
    omega_C: float
    factor: float

    @property
    def passed(self):
        return self.plateau <= self.factor * abs(self.term)

    @property
    def corrected_ok(self):
        return self.plateau <= self.corrected_bound


def biased_plateau_study(problem=None, init=None, zeta_g=1e-2, zeta_H=1e-2, iters=20000,
                         factor=10.0):
    """SR-VN with a constant injected bias; compare the stalled gap with the bias term.

    The gradient bias has norm zeta_g.  The Hessian bias is scaled so that
    ||b_H C||_F <= zeta_H for every factor with ||C||_F <= xi_u.  ``term`` is
    |omega_m| zeta_g^2 + |omega_C| zeta_H^2 and ``corrected_bound`` divides
    it by 2 eta delta, the limit of the accumulated geometric series.
    """
    problem = spectral_quadratic() if problem is None else problem
    d = problem.dim
    init = GaussianParams(np.zeros(d), 0.5 * np.eye(d)) if init is None else init
    consts = certified_constants(problem, init)
    sb = permissible_step(consts, rule="best")
    e = np.zeros(d)
    e[0] = 1.0
    ocfg = OracleConfig(bias_g=zeta_g * e, bias_H=(zeta_H / consts.xi_u) * np.outer(e, e))
    rec = run_optimizer("srvn", init, problem, ocfg,
                        StepConfig(rho=sb.rho, max_iters=iters, **TIGHT))
    gaps = rec.column("neg_elbo") - optimal_value(problem)
    plateau = float(gaps[-1])
    wm, wc = consts.omegas(sb.rho)
    term = abs(wm) * zeta_g**2 + abs(wc) * zeta_H**2
    corrected = term / (2 * sb.eta * consts.delta)
    return PlateauResult(plateau, term, corrected, sb.rho, wm, wc, factor)


# -- flow ---------------------------------------------------------------------

@dataclass
class FlowRateResult:
    consts: TheoryConstants
    worst_ratio: float
    slope: float
    bound_slope: float
    passed: bool


def flow_rate_study(h=1e-3, T=5.0, slack=1.05):
    """RK4 flow on a 1-D quadratic against the exp(-2 mu t) envelope."""
    problem = ProblemSpec.quadratic([[1.0]], [1.0])
    init = GaussianParams([3.0], [[2.0]])
    cfg = FlowConfig("mc", "rk4", h=h, T=T, record_every=10)
    traj = integrate_flow(init, problem, None, cfg, l_star=optimal_value(problem))
    delta, M = curvature_bounds(problem)
    consts = trajectory_constants(traj, delta, M)
    rep = lyapunov_report(traj, consts, slack=slack)
    return FlowRateResult(consts, rep.worst_ratio, rep.slope, rep.bound_slope, rep.bound_satisfied)


@dataclass
class InvarianceResult:
    max_cov_gap: float
    euler_exact: bool
    passed: bool


def invariance_study(d=3, h=1e-3, T=5.0, euler_rho=0.05, euler_steps=40, seed=0, tol=1e-6):
    """(m, V) and (m, C) flows agree; Euler in (m, C) equals SR-VN."""
    rng = np.random.default_rng(seed)
    problem = random_quadratic(rng, d)
    init = GaussianParams(rng.standard_normal(d), 0.7 * np.eye(d))
    every = 50
    mc = integrate_flow(init, problem, None, FlowConfig("mc", "rk4", h, T, every), max_halvings=0)
    mv = integrate_flow(init, problem, None, FlowConfig("mv", "rk4", h, T, every), max_halvings=0)
    gap = max(np.linalg.norm(a - b) for a, b in zip(mc.covariances(), mv.covariances()))
    eul = integrate_flow(init, problem, None,
                         FlowConfig("mc", "euler", euler_rho, euler_rho * euler_steps, 1),
                         max_halvings=0)
    rec = run_optimizer("srvn", init, problem, None,
                        StepConfig(rho=euler_rho, max_iters=euler_steps, **TIGHT), keep_states=True)
    exact = len(rec.states) == len(eul.states) and all(
        np.array_equal(a.mean, b.mean) and np.array_equal(a.chol, b.chol)
        for a, b in zip(rec.states, eul.states))
    return InvarianceResult(float(gap), bool(exact), bool(gap < tol and exact))


# -- randomized certificate sweeps ---------------------------------------------

@dataclass
class SweepResult:
    draws: int
    in_hypothesis: int
    out_of_hypothesis: int
    bound_violations: int
    pl_violations: int
    direction_failures: int
    worst_direction_gap: float
    reasons: dict = field(default_factory=dict)

    @property
    def passed(self):
        return (self.bound_violations == 0 and self.pl_violations == 0
                and self.direction_failures == 0)


def certificate_sweep(n_states=500, max_dim=8, seed=0, max_draws=None, direction_tol=1e-9):
    """Random states with tight constants; count bound and PL violations.

    A state is in the hypothesis set when its constants satisfy the
    conditions under which the eigenvalue bound is derived; states outside
    are counted, not scored.
    """
    rng = np.random.default_rng(seed)
    max_draws = 20 * n_states if max_draws is None else max_draws
    ops_cache = {}
    res = SweepResult(0, 0, 0, 0, 0, 0, 0.0)
    while res.in_hypothesis < n_states and res.draws < max_draws:
        res.draws += 1
        d = int(rng.integers(1, max_dim + 1))
        ops = ops_cache.setdefault(d, build_vectorization(d))
        q = random_state(rng, d)
        problem = random_quadratic(rng, d)
        delta, M = curvature_bounds(problem)
        lam = float(np.linalg.eigvalsh(q.cov)[0])
        fro = float(np.linalg.norm(q.chol))
        consts = TheoryConstants(delta, M, lam, fro, fro)
        rep = check_lemma1(q, consts, ops)
        if not rep.in_hypothesis:
            res.out_of_hypothesis += 1
            for why in rep.reason.split("; "):
                key = why.split(" ")[0]
                res.reasons[key] = res.reasons.get(key, 0) + 1
            continue
        res.in_hypothesis += 1
        res.bound_violations += not rep.holds
        pl = check_pl(q, problem, consts, ops, optimal_value(problem))
        res.pl_violations += not pl.holds
        gap = natural_direction_gap(q, moments(q, problem), ops)
        res.worst_direction_gap = max(res.worst_direction_gap, gap)
        res.direction_failures += not gap < direction_tol
    return res


@dataclass
class MCFimResult:
    errors: dict
    passed: bool


def mc_fim_study(dims=(1, 2, 3), n_samples=1_000_000, seed=0, tol=0.02):
    """Inverse of a sampled Fisher matrix against the closed-form blocks."""
    from scipy.linalg import block_diag

    rng = np.random.default_rng(seed)
    errs = {}
    for d in dims:
        q = random_state(rng, d)
        blocks = assemble_fim_inverse(q, build_vectorization(d))
        ref = block_diag(blocks.F_m_inv, blocks.F_C_inv)
        est = np.linalg.inv(mc_fim(q, n_samples, seed=seed + d))
        errs[d] = float(np.linalg.norm(est - ref) / np.linalg.norm(ref))
    return MCFimResult(errs, all(e < tol for e in errs.values()))
