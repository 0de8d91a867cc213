"""Expectation oracles: expected gradient, expected Hessian and expected loss.

Two loss families are supported.  The quadratic family has exact moments.
For Bayesian logistic regression every expectation reduces to a sum of
one-dimensional Gaussian integrals over the activations a_i = x_i^T theta,
which are evaluated with Gauss-Hermite quadrature.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .errors import ConfigError, DimensionError
from .gaussian import MomentEstimates, symmetrize

BLOCK_ROWS = 4096


@dataclass(frozen=True)
class ProblemSpec:
    """Loss definition.  Build with :meth:`quadratic` or :meth:`logistic`."""

    family: str
    gamma: float = 1.0
    A: np.ndarray = None
    b: np.ndarray = None
    c: float = 0.0
    X: object = None
    y: np.ndarray = None
    beta: float = 0.0
    nonconvex_reg: bool = False

    def __post_init__(self):
        if not self.gamma > 0:
            raise ConfigError("gamma must be positive")
        if self.family == "quadratic":
            A = symmetrize(np.atleast_2d(self.A))
            b = np.atleast_1d(np.asarray(self.b, dtype=float))
            if A.shape != (b.size, b.size):
                raise DimensionError("A and b dimensions disagree")
            try:
                np.linalg.cholesky(A)
            except np.linalg.LinAlgError as exc:
                raise ConfigError("A must be symmetric positive definite") from exc
            A.setflags(write=False)
            b.setflags(write=False)
            object.__setattr__(self, "A", A)
            object.__setattr__(self, "b", b)
        elif self.family == "logistic":
            X = self.X
            X = X.tocsr() if sp.issparse(X) else np.atleast_2d(np.asarray(X, dtype=float))
            y = np.asarray(self.y, dtype=float).ravel()
            if X.shape[0] != y.size:
                raise DimensionError("X rows and label count disagree")
            if not np.all(np.abs(y) == 1):
                raise ConfigError("labels must be -1 or +1")
            if self.beta < 0:
                raise ConfigError("beta must be non-negative")
            object.__setattr__(self, "X", X)
            object.__setattr__(self, "y", y)
        else:
            raise ConfigError(f"unknown loss family {self.family!r}")

    @classmethod
    def quadratic(cls, A, b, c=0.0, gamma=1.0, nonconvex_reg=False):
        return cls("quadratic", gamma=gamma, A=A, b=b, c=c, nonconvex_reg=nonconvex_reg)

    @classmethod
    def logistic(cls, X, y, beta, gamma=1.0, nonconvex_reg=False):
        return cls("logistic", gamma=gamma, X=X, y=y, beta=beta, nonconvex_reg=nonconvex_reg)

    @property
    def dim(self):
        return self.b.size if self.family == "quadratic" else self.X.shape[1]

    def optimum(self):
        """Exact minimiser (m*, V*) for quadratic problems."""
        if self.family != "quadratic" or self.nonconvex_reg:
            raise ConfigError("closed-form optimum only exists for plain quadratics")
        m = np.linalg.solve(self.A, self.b)
        V = symmetrize(self.gamma * np.linalg.inv(self.A))
        return m, V


@dataclass(frozen=True)
class OracleConfig:
    quadrature_nodes: int = 64
    mc_samples: int = 1000
    mc_seed: int = 0
    bias_g: np.ndarray = None
    bias_H: np.ndarray = None
    kind: str = "auto"

    def __post_init__(self):
        if self.quadrature_nodes < 3:
            raise ConfigError("quadrature_nodes must be at least 3")
        if self.mc_samples < 1:
            raise ConfigError("mc_samples must be at least 1")
        if self.kind not in ("auto", "exact", "quadrature", "monte_carlo"):
            raise ConfigError(f"unknown oracle kind {self.kind!r}")


DEFAULT_ORACLE = OracleConfig()


@lru_cache(maxsize=32)
def _gh_rule(n):
    z, w = np.polynomial.hermite_e.hermegauss(n)
    w = w / np.sqrt(2 * np.pi)
    z.setflags(write=False)
    w.setflags(write=False)
    return z, w


def _row_blocks(n):
    return [(s, min(s + BLOCK_ROWS, n)) for s in range(0, n, BLOCK_ROWS)]


def _activation_stats(X, q):
    # mean and std of a_i = x_i^T theta under q
    mu = np.asarray(X @ q.mean).ravel()
    XC = X @ q.chol
    XC = XC.toarray() if sp.issparse(XC) else np.asarray(XC)
    var = np.einsum("ij,ij->i", XC, XC)
    return mu, np.sqrt(var)


def _logistic_terms(X, y, q, nodes):
    """Per-datapoint E[softplus(-y a)], E[d/da], E[d2/da2]."""
    z, w = _gh_rule(nodes)
    mu, s = _activation_stats(X, q)
    a = mu[:, None] + s[:, None] * z[None, :]
    ya = y[:, None] * a
    e0 = np.logaddexp(0.0, -ya) @ w
    r = expit(-ya)
    e1 = -y * (r @ w)
    # sigma(a)(1 - sigma(a)) is even in a, so the label sign drops out
    e2 = (r * (1.0 - r)) @ w
    return e0, e1, e2


def _xt_diag_x(X, wts):
    d = X.shape[1]
    H = np.zeros((d, d))
    for s, e in _row_blocks(X.shape[0]):
        Xb = X[s:e]
        if sp.issparse(Xb):
            H += np.asarray((Xb.T @ Xb.multiply(wts[s:e, None])).todense())
        else:
            H += Xb.T @ (Xb * wts[s:e, None])
    return H


def _xt_vec(X, v):
    out = np.zeros(X.shape[1])
    for s, e in _row_blocks(X.shape[0]):
        out += np.asarray(X[s:e].T @ v[s:e]).ravel()
    return out


def _sum_blocks(v):
    total = 0.0
    for s, e in _row_blocks(v.size):
        total += float(np.sum(v[s:e]))
    return total


def nonconvex_reg_moments(mean):
    """Gradient and Hessian of sum_i m_i^2 / (1 + m_i^2) at the mean."""
    m = np.asarray(mean, dtype=float)
    u = 1.0 + m * m
    grad = 2.0 * m / u**2
    hess = np.diag((2.0 - 6.0 * m * m) / u**3)
    return grad, hess


def nonconvex_reg_value(mean):
    m = np.asarray(mean, dtype=float)
    return float(np.sum(m * m / (1.0 + m * m)))


def _add_nonconvex(moments, q, spec):
    if not spec.nonconvex_reg:
        return moments
    g, H = nonconvex_reg_moments(q.mean)
    return MomentEstimates(moments.grad + g, moments.hess + H, moments.bias_tag)


def quadratic_moments(q, spec):
    if spec.family != "quadratic":
        raise ConfigError("quadratic_moments needs a quadratic problem")
    _check_dim(q, spec)
    mom = MomentEstimates(spec.A @ q.mean - spec.b, spec.A, "exact")
    return _add_nonconvex(mom, q, spec)


def logistic_moments(q, spec, cfg=DEFAULT_ORACLE):
    if spec.family != "logistic":
        raise ConfigError("logistic_moments needs a logistic problem")
    _check_dim(q, spec)
    _, e1, e2 = _logistic_terms(spec.X, spec.y, q, cfg.quadrature_nodes)
    grad = _xt_vec(spec.X, e1) + spec.beta * q.mean
    hess = _xt_diag_x(spec.X, e2) + spec.beta * np.eye(q.dim)
    return _add_nonconvex(MomentEstimates(grad, hess, "quadrature"), q, spec)


def expected_loss(q, spec, cfg=None):
    cfg = DEFAULT_ORACLE if cfg is None else cfg
    _check_dim(q, spec)
    m = q.mean
    if spec.family == "quadratic":
        val = 0.5 * (m @ spec.A @ m + np.sum(spec.A * q.cov)) - spec.b @ m + spec.c
    else:
        e0, _, _ = _logistic_terms(spec.X, spec.y, q, cfg.quadrature_nodes)
        val = _sum_blocks(e0) + 0.5 * spec.beta * (m @ m + float(np.sum(q.chol * q.chol)))
    if spec.nonconvex_reg:
        val += nonconvex_reg_value(q.mean)
    return float(val)


def pointwise_moments(theta, spec):
    """Gradient and Hessian of the loss at a single parameter value."""
    theta = np.asarray(theta, dtype=float)
    if spec.family == "quadratic":
        return spec.A @ theta - spec.b, np.array(spec.A)
    a = np.asarray(spec.X @ theta).ravel()
    g = _xt_vec(spec.X, -spec.y * expit(-spec.y * a)) + spec.beta * theta
    p = expit(a)
    H = _xt_diag_x(spec.X, p * (1 - p)) + spec.beta * np.eye(theta.size)
    return g, H


def pointwise_loss(theta, spec):
    theta = np.asarray(theta, dtype=float)
    if spec.family == "quadratic":
        return float(0.5 * theta @ spec.A @ theta - spec.b @ theta + spec.c)
    a = np.asarray(spec.X @ theta).ravel()
    return _sum_blocks(np.logaddexp(0.0, -spec.y * a)) + 0.5 * spec.beta * theta @ theta


def mc_moments(q, spec, cfg):
    """Sample averages of the pointwise gradient and Hessian over theta ~ q."""
    _check_dim(q, spec)
    rng = np.random.default_rng(cfg.mc_seed)
    S = cfg.mc_samples
    thetas = q.mean[None, :] + rng.standard_normal((S, q.dim)) @ q.chol.T
    if spec.family == "quadratic":
        grad = spec.A @ thetas.mean(axis=0) - spec.b
        hess = np.array(spec.A)
    else:
        y = spec.y
        gsum = np.zeros(q.dim)
        wsum = np.zeros(spec.X.shape[0])
        # chunk the samples so memory stays bounded, summing in a fixed order
        for s0 in range(0, S, 256):
            T = thetas[s0:s0 + 256]
            a = np.asarray(spec.X @ T.T)
            r = -y[:, None] * expit(-y[:, None] * a)
            gsum += _xt_vec(spec.X, r.sum(axis=1))
            p = expit(a)
            wsum += (p * (1 - p)).sum(axis=1)
        grad = gsum / S + spec.beta * thetas.mean(axis=0)
        hess = _xt_diag_x(spec.X, wsum / S) + spec.beta * np.eye(q.dim)
    return _add_nonconvex(MomentEstimates(grad, hess, "monte_carlo"), q, spec)


def inject_bias(base, cfg):
    if cfg.bias_g is None and cfg.bias_H is None:
        return base
    d = base.grad.size
    g = np.array(base.grad)
    H = np.array(base.hess)
    if cfg.bias_g is not None:
        bg = np.asarray(cfg.bias_g, dtype=float)
        if bg.shape != (d,):
            raise DimensionError("bias_g has the wrong shape")
        g = g + bg
    if cfg.bias_H is not None:
        bH = np.asarray(cfg.bias_H, dtype=float)
        if bH.shape != (d, d):
            raise DimensionError("bias_H has the wrong shape")
        H = symmetrize(H + bH)
    return MomentEstimates(g, H, "injected")


def loss_and_moments(q, spec, cfg=None):
    """Expected loss and (possibly biased) moments from a single oracle pass."""
    cfg = DEFAULT_ORACLE if cfg is None else cfg
    kind = cfg.kind
    if kind == "auto":
        kind = "exact" if spec.family == "quadratic" else "quadrature"
    if spec.family == "quadratic" or kind == "monte_carlo":
        return expected_loss(q, spec, cfg), moments(q, spec, cfg)
    _check_dim(q, spec)
    e0, e1, e2 = _logistic_terms(spec.X, spec.y, q, cfg.quadrature_nodes)
    m = q.mean
    loss = _sum_blocks(e0) + 0.5 * spec.beta * (m @ m + float(np.sum(q.chol * q.chol)))
    grad = _xt_vec(spec.X, e1) + spec.beta * m
    hess = _xt_diag_x(spec.X, e2) + spec.beta * np.eye(q.dim)
    mom = _add_nonconvex(MomentEstimates(grad, hess, "quadrature"), q, spec)
    if spec.nonconvex_reg:
        loss += nonconvex_reg_value(m)
    return float(loss), inject_bias(mom, cfg)


def moments(q, spec, cfg=None):
    """Dispatch to the configured oracle, then apply any injected bias."""
    cfg = DEFAULT_ORACLE if cfg is None else cfg
    kind = cfg.kind
    if kind == "auto":
        kind = "exact" if spec.family == "quadratic" else "quadrature"
    if kind == "monte_carlo":
        base = mc_moments(q, spec, cfg)
    elif spec.family == "quadratic":
        base = quadratic_moments(q, spec)
    else:
        base = logistic_moments(q, spec, cfg)
    return inject_bias(base, cfg)


def _check_dim(q, spec):
    if q.dim != spec.dim:
        raise DimensionError(f"state has dimension {q.dim}, problem has {spec.dim}")
