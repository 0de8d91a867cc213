"""Numerical checks of the Fisher-geometry facts behind the convergence theory.

Conventions: ``vec`` stacks columns, ``vech`` stacks the columns of the lower
triangle (diagonal included).  K is the commutation matrix with
K vec(A) = vec(A^T), L the elimination matrix with L vec(A) = vech(A), and
N = (K + I) / 2.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, FactorizationError
from .gaussian import GaussianParams, neg_entropy, symmetrize, tril_half_diag
from .oracles import expected_loss, moments

MAX_DIM = 64
BOUND_TOL = 1e-10


def vec(A):
    return np.asarray(A).flatten(order="F")


def vech_indices(d):
    return np.array([j * d + i for j in range(d) for i in range(j, d)])


def vech(A):
    A = np.asarray(A)
    return vec(A)[vech_indices(A.shape[0])]


def unvech(v, d):
    out = np.zeros(d * d)
    out[vech_indices(d)] = v
    return out.reshape((d, d), order="F")


@dataclass(frozen=True)
class VectorizationOps:
    dim: int
    K: np.ndarray
    L: np.ndarray
    N: np.ndarray


def build_vectorization(d):
    if not (1 <= d <= MAX_DIM):
        raise DimensionError(f"dense vectorization operators need 1 <= d <= {MAX_DIM}, got {d}")
    n = d * d
    K = np.zeros((n, n))
    for i in range(d):
        for j in range(d):
            K[i * d + j, j * d + i] = 1.0
    idx = vech_indices(d)
    L = np.zeros((idx.size, n))
    L[np.arange(idx.size), idx] = 1.0
    N = 0.5 * (K + np.eye(n))
    return VectorizationOps(d, K, L, N)


@dataclass(frozen=True)
class FimBlocks:
    F_m_inv: np.ndarray
    F_C_inv: np.ndarray


def assemble_fim_inverse(q, ops):
    """Inverse Fisher information of N(m, C C^T) in (m, vech C) coordinates."""
    if ops.dim != q.dim:
        raise DimensionError("operator and state dimensions differ")
    C, L = q.chol, ops.L
    I = np.eye(q.dim)
    left = L @ np.kron(I, C) @ L.T
    right = L @ np.kron(I, C.T) @ L.T
    mid = L @ ops.N @ L.T
    F_C_inv = 0.5 * left @ np.linalg.solve(mid, right)
    F_C_inv = symmetrize(F_C_inv)
    F_m_inv = q.cov
    for name, B in (("F_m_inv", F_m_inv), ("F_C_inv", F_C_inv)):
        try:
            np.linalg.cholesky(B)
        except np.linalg.LinAlgError as exc:
            raise FactorizationError(f"{name} is not positive definite") from exc
    return FimBlocks(F_m_inv, F_C_inv)


def objective_gradient(q, mom, gamma=1.0):
    """Euclidean gradient in (m, vech C): (g, vech(lower((H - gamma V^-1) C)))."""
    C = q.chol
    Cinv_T = sla.solve_triangular(C, np.eye(q.dim), lower=True).T
    G = mom.hess @ C - gamma * Cinv_T
    return np.array(mom.grad), vech(np.tril(G))


def natural_direction(q, mom, ops, gamma=1.0):
    """Natural gradient (F^-1 times the Euclidean gradient) via explicit FIM blocks."""
    blocks = assemble_fim_inverse(q, ops)
    gm, gC = objective_gradient(q, mom, gamma)
    return blocks.F_m_inv @ gm, unvech(blocks.F_C_inv @ gC, q.dim)


def natural_direction_gap(q, mom, ops, gamma=1.0):
    """Largest entrywise gap between the explicit-FIM and closed-form directions."""
    nm, nC = natural_direction(q, mom, ops, gamma)
    C = q.chol
    W = C.T @ mom.hess @ C - gamma * np.eye(q.dim)
    ref_m = C @ (C.T @ mom.grad)
    ref_C = C @ tril_half_diag(W)
    scale = max(1.0, np.max(np.abs(ref_m)), np.max(np.abs(ref_C)))
    return max(np.max(np.abs(nm - ref_m)), np.max(np.abs(nC - ref_C))) / scale


@dataclass(frozen=True)
class FimBoundReport:
    in_hypothesis: bool
    holds: bool
    eig_min: float
    eig_max: float
    lower: float
    upper: float
    reason: str = ""


def hypothesis_violations(q, consts, rel=1e-9):
    """Reasons why ``q`` falls outside the iterate box of ``consts``."""
    out = []
    lam = float(np.linalg.eigvalsh(q.cov)[0])
    fro = float(np.linalg.norm(q.chol))
    if lam < consts.lambda_min * (1 - rel):
        out.append(f"min eig of V {lam:.6g} < lambda_min {consts.lambda_min:.6g}")
    if fro < consts.xi_l * (1 - rel) or fro > consts.xi_u * (1 + rel):
        out.append(f"||C||_F {fro:.6g} outside [{consts.xi_l:.6g}, {consts.xi_u:.6g}]")
    if consts.lambda_min > 1:
        # the lower bound min(lam, lam^2/2) only follows from lam/2 when lam <= 1
        out.append(f"lambda_min {consts.lambda_min:.6g} > 1")
    return out


def check_lemma1(q, consts, ops):
    """Test lambda_g_min <= eig(F^-1) <= lambda_g_max on both FIM blocks."""
    blocks = assemble_fim_inverse(q, ops)
    ev = np.concatenate([np.linalg.eigvalsh(blocks.F_m_inv),
                         np.linalg.eigvalsh(blocks.F_C_inv)])
    lo, hi = consts.lambda_g_min, consts.lambda_g_max
    why = hypothesis_violations(q, consts)
    ok = bool(ev.min() >= lo - BOUND_TOL and ev.max() <= hi + BOUND_TOL)
    return FimBoundReport(not why, ok, float(ev.min()), float(ev.max()), lo, hi, "; ".join(why))


@dataclass(frozen=True)
class PLReport:
    in_hypothesis: bool
    holds: bool
    lhs: float
    rhs: float
    reason: str = ""


def check_pl(q, problem, consts, ops, l_star, oracle_cfg=None, slack=1e-8):
    """Natural-gradient norm against 2 mu times the objective gap."""
    mom = moments(q, problem, oracle_cfg)
    blocks = assemble_fim_inverse(q, ops)
    gm, gC = objective_gradient(q, mom, problem.gamma)
    lhs = float(gm @ blocks.F_m_inv @ gm + gC @ blocks.F_C_inv @ gC)
    gap = expected_loss(q, problem, oracle_cfg) + problem.gamma * neg_entropy(q) - l_star
    rhs = 2 * consts.mu * gap
    why = hypothesis_violations(q, consts)
    return PLReport(not why, bool(lhs >= rhs - slack), lhs, float(rhs), "; ".join(why))


@dataclass(frozen=True)
class NeumannReport:
    rhos: np.ndarray
    gaps: np.ndarray
    order: float
    ratios: np.ndarray
    ok: bool


def neumann_gap(q, mom, rho_list, gamma=1.0, order_range=(1.8, 2.2)):
    """One-step covariance gap between VN and SR-VN from the same state.

    The fitted exponent p in gap ~ rho^p should be close to 2.
    """
    from .optimizers import StepConfig, srvn_step

    S = q.precision
    rhos = np.asarray(rho_list, dtype=float)
    gaps = []
    for rho in rhos:
        S1 = symmetrize((1 - gamma * rho) * S + rho * mom.hess)
        V_vn = symmetrize(np.linalg.inv(S1))
        V_sr = srvn_step(q, mom, StepConfig(rho=float(rho), gamma=gamma)).cov
        gaps.append(np.linalg.norm(V_vn - V_sr))
    gaps = np.array(gaps)
    if np.all(gaps > 0) and rhos.size >= 2:
        order = float(np.polyfit(np.log(rhos), np.log(gaps), 1)[0])
    else:
        order = math.nan
    ratios = gaps[:-1] / gaps[1:] if rhos.size >= 2 else np.array([])
    ok = bool(order_range[0] <= order <= order_range[1])
    return NeumannReport(rhos, gaps, order, ratios, ok)


FLOP_POLYNOMIALS = {
    "vn": lambda d: d**3 + 4 * d**2,
    "srvn": lambda d: 3 * d**3 + 4.5 * d**2 + 0.5 * d,
    "bwgd": lambda d: 3 * d**3 + 5 * d**2,
}


def flop_estimate(method, d):
    """Leading-order operation count of one update (a bookkeeping value)."""
    if d < 1:
        raise DimensionError("d must be at least 1")
    try:
        return FLOP_POLYNOMIALS[method](d)
    except KeyError:
        raise ValueError(f"no operation count for method {method!r}") from None


def mc_fim(q, n_samples=1_000_000, seed=0, chunk=100_000):
    """Monte-Carlo Fisher information in (m, vech C) from sampled scores."""
    d = q.dim
    C = q.chol
    Cinv_T = sla.solve_triangular(C, np.eye(d), lower=True).T
    idx = vech_indices(d)
    p = d + idx.size
    F = np.zeros((p, p))
    rng = np.random.default_rng(seed)
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        z = rng.standard_normal((n, d))
        s_m = z @ Cinv_T.T
        # score in C is C^{-T} (z z^T - I), restricted to the lower triangle
        outer = z[:, :, None] * z[:, None, :] - np.eye(d)[None]
        s_C = np.einsum("ab,nbc->nac", Cinv_T, outer)
        s_C = s_C.transpose(0, 2, 1).reshape(n, d * d)[:, idx]
        s = np.hstack([s_m, s_C])
        F += s.T @ s
        done += n
    return F / n_samples


def random_lower(rng, d, diag_offset=0.1):
    """A random lower-triangular factor with standard normal entries."""
    C = np.tril(rng.standard_normal((d, d)))
    C[np.diag_indices(d)] = np.abs(np.diag(C)) + diag_offset
    return C


def random_state(rng, d):
    return GaussianParams(rng.standard_normal(d), random_lower(rng, d))
