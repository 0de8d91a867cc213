"""Gaussian variational family stored as (mean, lower Cholesky factor).

The objective minimised everywhere in the package is

    L(m, C) = E_q[loss(theta)] + gamma * E_q[log q(theta)]

with q = N(m, C C^T).  E_q[log q] is the negative entropy.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, FactorizationError

DIAG_FLOOR = 1e-12


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def symmetrize(A):
    A = np.asarray(A, dtype=float)
    return 0.5 * (A + A.T)


@dataclass(frozen=True)
class GaussianParams:
    """Mean vector and lower-triangular factor ``chol`` with V = chol @ chol.T."""

    mean: np.ndarray
    chol: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        chol = np.atleast_2d(np.asarray(self.chol, dtype=float))
        d = mean.shape[0]
        if mean.ndim != 1 or d < 1:
            raise DimensionError("mean must be a non-empty vector")
        if chol.shape != (d, d):
            raise DimensionError(f"chol has shape {chol.shape}, expected {(d, d)}")
        if np.any(np.triu(chol, 1) != 0.0):
            raise DimensionError("chol must be lower triangular")
        diag = np.diag(chol)
        bad = np.flatnonzero(~(diag > DIAG_FLOOR))
        if bad.size:
            raise FactorizationError(
                f"chol diagonal entry {bad[0]} is {diag[bad[0]]:.3e}, below {DIAG_FLOOR}")
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "chol", _frozen(chol))

    @property
    def dim(self):
        return self.mean.shape[0]

    @property
    def cov(self):
        return self.chol @ self.chol.T

    @property
    def precision(self):
        Linv = sla.solve_triangular(self.chol, np.eye(self.dim), lower=True)
        return Linv.T @ Linv

    @classmethod
    def isotropic(cls, mean, scale):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        return cls(mean, scale * np.eye(mean.shape[0]))


@dataclass(frozen=True)
class NaturalState:
    """Mean and precision S = V^{-1}; the native state of the VN update."""

    mean: np.ndarray
    precision: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        S = symmetrize(np.atleast_2d(self.precision))
        d = mean.shape[0]
        if S.shape != (d, d):
            raise DimensionError(f"precision has shape {S.shape}, expected {(d, d)}")
        try:
            np.linalg.cholesky(S)
        except np.linalg.LinAlgError as exc:
            raise FactorizationError("precision is not positive definite") from exc
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "precision", _frozen(S))

    @property
    def dim(self):
        return self.mean.shape[0]

    @property
    def cov(self):
        return symmetrize(np.linalg.inv(self.precision))


MOMENT_TAGS = ("exact", "quadrature", "monte_carlo", "injected")


@dataclass(frozen=True)
class MomentEstimates:
    """Expected gradient and expected Hessian of the loss under q."""

    grad: np.ndarray
    hess: np.ndarray
    bias_tag: str = "exact"

    def __post_init__(self):
        g = np.atleast_1d(np.asarray(self.grad, dtype=float))
        H = symmetrize(np.atleast_2d(self.hess))
        if H.shape != (g.shape[0], g.shape[0]):
            raise DimensionError("grad and hess dimensions disagree")
        if self.bias_tag not in MOMENT_TAGS:
            raise ValueError(f"unknown bias tag {self.bias_tag!r}")
        object.__setattr__(self, "grad", _frozen(g))
        object.__setattr__(self, "hess", _frozen(H))


def tril_half_diag(A):
    """Strict lower triangle of ``A`` plus half its diagonal."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    out = np.tril(A, -1)
    out[np.diag_indices_from(out)] = 0.5 * np.diag(A)
    return out


def neg_entropy(q):
    d = q.dim
    return -0.5 * d * (1.0 + np.log(2 * np.pi)) - np.sum(np.log(np.diag(q.chol)))


def gaussian_kl(q, p):
    """KL(q || p) between two Gaussians in square-root form."""
    if q.dim != p.dim:
        raise DimensionError("dimension mismatch")
    d = q.dim
    # M = Lp^{-1} Lq gives tr(Vp^{-1} Vq) = ||M||_F^2
    M = sla.solve_triangular(p.chol, q.chol, lower=True)
    r = sla.solve_triangular(p.chol, p.mean - q.mean, lower=True)
    logdet = 2.0 * (np.sum(np.log(np.diag(p.chol))) - np.sum(np.log(np.diag(q.chol))))
    kl = 0.5 * (np.sum(M * M) + r @ r - d + logdet)
    return max(kl, 0.0)


def elbo(q, problem, cfg=None):
    """Negative ELBO: expected loss plus gamma times the negative entropy."""
    from .oracles import expected_loss

    return expected_loss(q, problem, cfg) + problem.gamma * neg_entropy(q)


def to_natural(q):
    return NaturalState(q.mean, q.precision)


def from_natural(s):
    V = s.cov
    try:
        C = np.linalg.cholesky(V)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError("covariance is not positive definite") from exc
    return GaussianParams(s.mean, np.tril(C))


def mv_to_params(mean, V):
    V = symmetrize(V)
    try:
        C = np.linalg.cholesky(V)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError("covariance is not positive definite") from exc
    return GaussianParams(mean, np.tril(C))
