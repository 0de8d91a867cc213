"""Discrete-time updates for Gaussian variational inference.

Four methods are provided:

* ``gd``    plain gradient descent on (m, C),
* ``vn``    variational Newton in (m, S) with S the precision,
* ``srvn``  the square-root variational Newton step in (m, C),
* ``bwgd``  Bures-Wasserstein gradient descent in (m, V).

Also here: the convergence constants, the theory-driven step size and
``run_optimizer`` which drives any method to convergence.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import ConfigError, PositivityError, StepSizeError, TheoryViolationError
from .gaussian import (
    GaussianParams,
    NaturalState,
    from_natural,
    mv_to_params,
    neg_entropy,
    symmetrize,
    tril_half_diag,
)
from .oracles import DEFAULT_ORACLE, loss_and_moments

METHODS = ("gd", "vn", "srvn", "bwgd")


@dataclass(frozen=True)
class StepConfig:
    rho: float
    gamma: float = 1.0
    max_iters: int = 1000
    grad_tol: float = 1e-8
    fixed_point_tol: float = 1e-8

    def __post_init__(self):
        if not self.rho >= 0 or not self.gamma > 0:
            raise ConfigError("rho must be non-negative and gamma positive")
        if not (self.grad_tol > 0 and self.fixed_point_tol > 0):
            raise ConfigError("tolerances must be positive")
        if self.max_iters < 0:
            raise ConfigError("max_iters must be non-negative")


def _check_diag(C, iteration=None):
    diag = np.diag(C)
    bad = np.flatnonzero(~(diag > 0))
    if bad.size:
        raise StepSizeError(
            f"step size too large: diagonal entry {bad[0]} of C became {diag[bad[0]]:.3e}",
            index=int(bad[0]), iteration=iteration)


def gd_step(q, mom, cfg):
    """One gradient step on (m, C); only the lower triangle of dL/dC is used."""
    C = q.chol
    Cinv_T = sla.solve_triangular(C, np.eye(q.dim), lower=True).T
    G = mom.hess @ C - cfg.gamma * Cinv_T
    C1 = C - cfg.rho * np.tril(G)
    _check_diag(C1)
    return GaussianParams(q.mean - cfg.rho * mom.grad, C1)


def vn_step(s, mom, cfg, iteration=None):
    S1 = symmetrize((1.0 - cfg.gamma * cfg.rho) * s.precision + cfg.rho * mom.hess)
    try:
        cf = sla.cho_factor(S1, lower=True)
    except np.linalg.LinAlgError as exc:
        raise PositivityError("VN precision update lost positive definiteness",
                              iteration=iteration) from exc
    m1 = s.mean - cfg.rho * sla.cho_solve(cf, mom.grad)
    return NaturalState(m1, S1)


def srvn_direction(q, mom, gamma):
    """Natural-gradient flow field in (m, C): returns (dm, dC)."""
    C = q.chol
    W = C.T @ mom.hess @ C
    W[np.diag_indices_from(W)] -= gamma
    dC = -(C @ tril_half_diag(W))
    dm = -(C @ (C.T @ mom.grad))
    return dm, dC


def srvn_step(q, mom, cfg):
    dm, dC = srvn_direction(q, mom, cfg.gamma)
    C1 = np.tril(q.chol + cfg.rho * dC)
    _check_diag(C1)
    return GaussianParams(q.mean + cfg.rho * dm, C1)


def bwgd_step(mean, V, mom, alpha, gamma=1.0, iteration=None):
    """Bures-Wasserstein step; returns the new (mean, V)."""
    d = V.shape[0]
    S = symmetrize(np.linalg.inv(V))
    Mt = np.eye(d) - alpha * (mom.hess - gamma * S)
    V1 = symmetrize(Mt @ V @ Mt.T)
    try:
        np.linalg.cholesky(V1)
    except np.linalg.LinAlgError as exc:
        raise PositivityError("BW-GD covariance update lost positive definiteness",
                              iteration=iteration) from exc
    return mean - alpha * mom.grad, V1


@dataclass(frozen=True)
class TheoryConstants:
    """Strong convexity, smoothness and iterate-bound constants."""

    delta: float
    M: float
    lambda_min: float
    xi_l: float
    xi_u: float

    def __post_init__(self):
        if not (0 < self.delta <= self.M):
            raise TheoryViolationError(f"need 0 < delta <= M, got {self.delta}, {self.M}")
        if not (0 < self.xi_l <= self.xi_u):
            raise TheoryViolationError(f"need 0 < xi_l <= xi_u, got {self.xi_l}, {self.xi_u}")
        if not self.lambda_min > 0:
            raise TheoryViolationError("lambda_min must be positive")

    @property
    def lambda_g_min(self):
        return min(self.lambda_min, self.lambda_min**2 / 2)

    @property
    def lambda_g_max(self):
        return self.xi_u**2

    @property
    def mu(self):
        return self.delta * self.lambda_g_min

    @property
    def rho1(self):
        return self.lambda_min / (self.xi_u**4 * self.M)

    @property
    def rho2(self):
        return math.sqrt(2 / 5) * self.xi_l**2 / (self.M * self.xi_u**4)

    def eta(self, rho):
        a = self.M * self.xi_u**4
        first = self.lambda_min * rho - a * rho**2 / 2
        second = math.sqrt(5 / 2) * rho * self.xi_l**2 - 5 * rho**2 * a / 4
        return min(first, second)

    def omegas(self, rho):
        """Coefficients of the bias terms in the biased-oracle recursion."""
        a = self.M * self.xi_u**4
        omega_m = a * rho**2 / 2 - self.lambda_min * rho
        omega_C = 5 * rho**2 * a / 4 - math.sqrt(5 / 2) * rho * self.xi_l**2
        return omega_m, omega_C


@dataclass(frozen=True)
class StepBounds:
    rho1: float
    rho2: float
    rho: float
    eta: float
    contraction: float


def permissible_step(consts, rule="max"):
    """Step size from the two quadratic bounds and its contraction factor.

    ``rule="max"`` takes rho = max(rho1, rho2).  ``rule="best"`` takes the
    rho in (0, max(rho1, rho2)] that maximises eta, which is always
    contractive.  A contraction outside (0, 1) raises
    :class:`TheoryViolationError`.
    """
    r1, r2 = consts.rho1, consts.rho2
    cap = max(r1, r2)
    if rule == "max":
        rho = cap
    elif rule == "best":
        a = consts.M * consts.xi_u**4
        b = math.sqrt(5 / 2) * consts.xi_l**2
        cands = [r1, r2]
        cross = 4 * (b - consts.lambda_min) / (3 * a)
        if 0 < cross < cap:
            cands.append(cross)
        rho = max(cands, key=consts.eta)
    else:
        raise ConfigError(f"unknown rule {rule!r}")
    eta = consts.eta(rho)
    contraction = 1 - 2 * eta * consts.delta
    if not (0 < contraction < 1):
        raise TheoryViolationError(
            f"contraction {contraction:.6g} outside (0, 1) at rho={rho:.6g} (eta={eta:.6g})")
    return StepBounds(r1, r2, rho, eta, contraction)


def iteration_estimate(consts, gap0, eps):
    """Iterations to shrink the objective gap from ``gap0`` below ``eps``.

    Uses the two rate bounds obtained at rho1 and rho2 and keeps the smaller
    count.
    """
    if gap0 <= eps:
        return 0.0
    lmax = consts.xi_u**2
    k = consts.delta / consts.M
    rates = [k * consts.lambda_min**2 / lmax**2, k * consts.xi_l**4 / consts.xi_u**4]
    num = math.log(eps / gap0)
    counts = [num / math.log1p(-r) if r < 1 else 1.0 for r in rates]
    return min(counts)


def contraction_iterations(contraction, gap0, eps):
    if gap0 <= eps:
        return 0.0
    return math.log(eps / gap0) / math.log(contraction)


def power_iteration(X, tol=1e-8, max_iter=10000, seed=0):
    """Largest eigenvalue of X^T X using matrix-vector products only."""
    d = X.shape[1]
    v = np.random.default_rng(seed).standard_normal(d)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = np.asarray(X.T @ (X @ v)).ravel()
        lam_new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
        if abs(lam_new - lam) <= tol * max(abs(lam_new), 1.0):
            return lam_new
        lam = lam_new
    return lam


def curvature_bounds(problem):
    """(delta, M) for the loss: strong convexity and smoothness."""
    if problem.family == "quadratic":
        ev = np.linalg.eigvalsh(problem.A)
        return float(ev[0]), float(ev[-1])
    lam = power_iteration(problem.X)
    return problem.beta, lam / 4 + problem.beta


def estimate_constants(problem, init, oracle_cfg=None, pilot_iters=20, rho=None):
    """Empirical constants from a short pilot run of gradient descent."""
    delta, M = curvature_bounds(problem)
    rho = 1.0 / M if rho is None else rho
    rec = run_optimizer("gd", init, problem, oracle_cfg,
                        StepConfig(rho=rho, gamma=problem.gamma, max_iters=pilot_iters))
    return TheoryConstants(delta=delta, M=M, lambda_min=float(np.min(rec.column("V_eig_min"))),
                           xi_l=float(np.min(rec.column("C_frob"))),
                           xi_u=float(np.max(rec.column("C_frob"))))


ROW_FIELDS = ("iter", "wall_ms", "neg_elbo", "grad_norm", "C_frob", "V_eig_min", "V_eig_max")


@dataclass
class RunRecord:
    """Per-iteration trajectory of one optimizer run.

    ``rows`` holds one tuple per visited state, starting with the initial
    state at iteration 0; ``iterations`` is the number of updates taken.
    """

    method: str
    rows: list = field(default_factory=list)
    converged: bool = False
    final: GaussianParams = None
    grad_residual: float = math.nan
    fixed_point_residual: float = math.nan
    error: str = None
    error_iteration: int = None
    states: list = None
    metrics: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def iterations(self):
        return self.rows[-1][0] if self.rows else 0

    def column(self, name):
        i = ROW_FIELDS.index(name)
        return np.array([r[i] for r in self.rows])


def run_optimizer(method, init, problem, oracle_cfg=None, step_cfg=None,
                  keep_states=False, on_error="raise", monitor=None):
    """Iterate ``method`` from ``init`` until convergence or the budget runs out.

    Convergence means ||g|| <= grad_tol and ||H - gamma V^{-1}||_F <=
    fixed_point_tol.  Step failures are raised, or with ``on_error="record"``
    stored on the returned record.  ``monitor(q)`` may return a dict of extra
    per-iteration values, collected in ``record.extra``.
    """
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}")
    cfg = step_cfg
    ocfg = DEFAULT_ORACLE if oracle_cfg is None else oracle_cfg
    gamma = cfg.gamma
    rec = RunRecord(method, states=[] if keep_states else None)

    q = init
    nat = NaturalState(init.mean, init.precision) if method == "vn" else None
    V = init.cov if method == "bwgd" else None
    elapsed = 0.0
    t = 0
    while True:
        t0 = time.perf_counter()
        loss, mom = loss_and_moments(q, problem, ocfg)
        elapsed += time.perf_counter() - t0

        S = nat.precision if nat is not None else q.precision
        gres = float(np.linalg.norm(mom.grad))
        fres = float(np.linalg.norm(mom.hess - gamma * S))
        ev = np.linalg.eigvalsh(q.cov)
        val = loss + gamma * neg_entropy(q)
        rec.rows.append((t, elapsed * 1e3, val, gres, float(np.linalg.norm(q.chol)),
                         float(ev[0]), float(ev[-1])))
        if keep_states:
            rec.states.append(q)
        if monitor is not None:
            for k, v in monitor(q).items():
                rec.extra.setdefault(k, []).append(v)
        rec.final, rec.grad_residual, rec.fixed_point_residual = q, gres, fres
        if gres <= cfg.grad_tol and fres <= cfg.fixed_point_tol:
            rec.converged = True
            break
        if t >= cfg.max_iters:
            break

        t0 = time.perf_counter()
        try:
            if method == "gd":
                q = gd_step(q, mom, cfg)
            elif method == "srvn":
                q = srvn_step(q, mom, cfg)
            elif method == "vn":
                nat = vn_step(nat, mom, cfg, iteration=t)
                q = from_natural(nat)
            else:
                m1, V = bwgd_step(q.mean, V, mom, cfg.rho, gamma, iteration=t)
                q = mv_to_params(m1, V)
        except (StepSizeError, PositivityError) as exc:
            exc.iteration = t
            if on_error == "raise":
                exc.record = rec
                raise
            rec.error = str(exc)
            rec.error_iteration = t
            break
        elapsed += time.perf_counter() - t0
        t += 1
    return rec
