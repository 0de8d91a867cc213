import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ngvi.errors import DimensionError, FactorizationError
from ngvi.gaussian import (GaussianParams, MomentEstimates, NaturalState, elbo, from_natural,
                           gaussian_kl, mv_to_params, neg_entropy, to_natural, tril_half_diag)
from ngvi.oracles import ProblemSpec
from ngvi.studies import toy_regression

# reference values frozen from tools/derive_oracles.py
NEG_ENTROPY_1D = -1.4189385332046727
NEG_ENTROPY_DIAG_1_2 = -3.5310242469692907
KL_01_04 = 0.31814718055994545
KL_11_02 = 0.3465735902799727
KL_02_11 = 0.6534264097200275


def test_tril_identity():
    assert np.array_equal(tril_half_diag(np.eye(2)), 0.5 * np.eye(2))


def test_tril_example():
    out = tril_half_diag(np.array([[2.0, 3.0], [5.0, 8.0]]))
    assert np.array_equal(out, np.array([[1.0, 0.0], [5.0, 4.0]]))


def test_tril_rejects_non_square():
    with pytest.raises(DimensionError):
        tril_half_diag(np.ones((2, 3)))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (4, 4), elements=st.floats(-1e3, 1e3)))
def test_tril_splits_symmetric_matrix(B):
    A = B + B.T
    T = tril_half_diag(A)
    assert np.max(np.abs(T + T.T - A)) <= 1e-12 * max(1.0, np.max(np.abs(A)))


def test_neg_entropy_1d():
    q = GaussianParams([0.0], [[1.0]])
    assert abs(neg_entropy(q) - NEG_ENTROPY_1D) < 1e-12


def test_neg_entropy_diag():
    q = GaussianParams([0.0, 0.0], np.diag([1.0, 2.0]))
    assert abs(neg_entropy(q) - NEG_ENTROPY_DIAG_1_2) < 1e-12
    assert abs(neg_entropy(q) - (-(1 + np.log(2 * np.pi)) - np.log(2))) < 1e-12


@pytest.mark.parametrize("d", [1, 3, 7])
def test_neg_entropy_scale_shift(d):
    q1 = GaussianParams(np.zeros(d), np.eye(d))
    qe = GaussianParams(np.zeros(d), np.e * np.eye(d))
    assert abs((neg_entropy(qe) - neg_entropy(q1)) + d) < 1e-12


def test_kl_self_is_zero():
    rng = np.random.default_rng(0)
    q = GaussianParams(rng.standard_normal(3), np.tril(rng.standard_normal((3, 3)), -1) + np.eye(3))
    assert gaussian_kl(q, q) == 0.0


def test_kl_1d_closed_form():
    q = GaussianParams([0.0], [[1.0]])
    p = GaussianParams([0.0], [[2.0]])
    assert abs(gaussian_kl(q, p) - KL_01_04) < 1e-12
    assert abs(gaussian_kl(q, p) - 0.5 * (0.25 + np.log(4) - 1)) < 1e-15


def test_kl_asymmetric():
    # variances 1 and 2
    q = GaussianParams([1.0], [[1.0]])
    p = GaussianParams([0.0], [[np.sqrt(2.0)]])
    assert abs(gaussian_kl(q, p) - KL_11_02) < 1e-12
    assert abs(gaussian_kl(p, q) - KL_02_11) < 1e-12
    assert abs(gaussian_kl(q, p) - gaussian_kl(p, q)) > 0.1


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_kl_nonnegative(d, seed):
    rng = np.random.default_rng(seed)
    mk = lambda: GaussianParams(rng.standard_normal(d),
                                np.tril(rng.standard_normal((d, d)), -1)
                                + np.diag(rng.uniform(0.2, 2.0, d)))
    assert gaussian_kl(mk(), mk()) >= 0.0


@pytest.mark.parametrize("d", [1, 2, 5])
def test_elbo_identity_quadratic(d):
    q = GaussianParams(np.zeros(d), np.eye(d))
    prob = ProblemSpec.quadratic(np.eye(d), np.zeros(d))
    assert abs(elbo(q, prob) - (d / 2 + neg_entropy(q))) < 1e-12


def test_elbo_optimum_is_minimal():
    prob = toy_regression()
    m_star, V_star = prob.optimum()
    q_star = mv_to_params(m_star, V_star)
    best = elbo(q_star, prob)
    for dm in np.linspace(-0.5, 0.5, 5):
        for s in (0.8, 0.9, 1.1, 1.25):
            q = GaussianParams(m_star + dm, s * q_star.chol)
            assert elbo(q, prob) >= best - 1e-12


def test_cov_and_precision():
    q = GaussianParams([0.0, 0.0], [[2.0, 0.0], [1.0, 1.0]])
    assert np.array_equal(q.cov, np.array([[4.0, 2.0], [2.0, 2.0]]))
    assert np.max(np.abs(q.precision - np.array([[0.5, -0.5], [-0.5, 1.0]]))) < 1e-15
    assert np.array_equal(GaussianParams.isotropic([0.0, 0.0], 1.0).precision, np.eye(2))


def test_natural_round_trip():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        d = rng.integers(1, 7)
        B = rng.standard_normal((d, d))
        V = B @ B.T + 0.1 * np.eye(d)
        q = mv_to_params(rng.standard_normal(d), V)
        back = from_natural(to_natural(q))
        worst = max(worst, np.linalg.norm(back.cov - q.cov) / np.linalg.norm(q.cov),
                    np.linalg.norm(back.mean - q.mean))
    assert worst < 1e-10


def test_invalid_states():
    with pytest.raises(FactorizationError):
        GaussianParams([0.0, 0.0], [[1.0, 0.0], [0.0, 0.0]])
    with pytest.raises(DimensionError):
        GaussianParams([0.0, 0.0], [[1.0, 1.0], [0.0, 1.0]])
    with pytest.raises(DimensionError):
        GaussianParams([0.0], np.eye(2))
    with pytest.raises(FactorizationError):
        NaturalState([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(ValueError):
        MomentEstimates([0.0], [[1.0]], bias_tag="guess")


def test_params_are_read_only():
    q = GaussianParams([0.0], [[1.0]])
    with pytest.raises(ValueError):
        q.mean[0] = 1.0
