import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ngvi.errors import ConfigError, PositivityError, StepSizeError, TheoryViolationError
from ngvi.gaussian import GaussianParams, MomentEstimates, NaturalState
from ngvi.oracles import ProblemSpec, moments
from ngvi.optimizers import (StepConfig, TheoryConstants, bwgd_step, contraction_iterations,
                             gd_step, iteration_estimate, permissible_step, power_iteration,
                             run_optimizer, srvn_direction, srvn_step, vn_step)
from ngvi.studies import random_quadratic, toy_regression

# exact rationals and surds frozen from tools/derive_oracles.py
ETA_UNIT = 0.33113883008418967
CONTRACTION_UNIT = 0.33772233983162067


def scalar(m, c):
    return GaussianParams([m], [[c]])


def unit_mom(g=0.0, h=1.0):
    return MomentEstimates([g], [[h]])


def test_gd_fixed_point():
    prob = random_quadratic(np.random.default_rng(0), 3)
    m, V = prob.optimum()
    q = GaussianParams(m, np.linalg.cholesky(V))
    q1 = gd_step(q, moments(q, prob), StepConfig(rho=0.1))
    assert np.max(np.abs(q1.mean - q.mean)) < 1e-12
    assert np.max(np.abs(q1.chol - q.chol)) < 1e-12


def test_gd_scalar():
    prob = ProblemSpec.quadratic([[1.0]], [0.0])
    q = scalar(1.0, 1.0)
    q1 = gd_step(q, moments(q, prob), StepConfig(rho=0.1))
    assert abs(q1.mean[0] - 0.9) < 1e-15
    assert q1.chol[0, 0] == 1.0


def test_gd_descends_below_inverse_smoothness():
    rng = np.random.default_rng(1)
    for _ in range(20):
        d = int(rng.integers(1, 6))
        prob = random_quadratic(rng, d)
        M = np.linalg.eigvalsh(prob.A).max()
        rec = run_optimizer("gd", GaussianParams(rng.standard_normal(d), np.eye(d)), prob,
                            step_cfg=StepConfig(rho=0.5 / M, max_iters=50))
        assert np.all(np.diff(rec.column("neg_elbo")) <= 1e-12)


def test_vn_unit_step_is_exact():
    prob = toy_regression()
    m_star, V_star = prob.optimum()
    rec = run_optimizer("vn", GaussianParams([3.0, -2.0], 2 * np.eye(2)), prob,
                        step_cfg=StepConfig(rho=1.0, max_iters=10))
    assert rec.iterations == 1 and rec.converged
    assert np.max(np.abs(rec.final.mean - m_star)) < 1e-10
    assert np.max(np.abs(rec.final.cov - V_star)) < 1e-10


def test_vn_zero_step_is_identity():
    s = NaturalState([0.5, -1.0], [[2.0, 0.3], [0.3, 1.0]])
    s1 = vn_step(s, MomentEstimates([1.0, 1.0], np.eye(2)), StepConfig(rho=0.0))
    assert np.array_equal(s1.mean, s.mean) and np.array_equal(s1.precision, s.precision)


def test_vn_scalar_precision():
    s1 = vn_step(NaturalState([0.0], [[2.0]]), unit_mom(), StepConfig(rho=0.5))
    assert s1.precision[0, 0] == 1.5


def test_vn_loses_positivity_with_indefinite_hessian():
    with pytest.raises(PositivityError):
        vn_step(NaturalState([0.0], [[1.0]]), unit_mom(h=-5.0), StepConfig(rho=0.5))


def test_srvn_scalar_fixed_point():
    q1 = srvn_step(scalar(0.0, 1.0), unit_mom(), StepConfig(rho=0.1))
    assert q1.chol[0, 0] == 1.0


def test_srvn_scalar_step():
    q1 = srvn_step(scalar(0.0, 2.0), unit_mom(), StepConfig(rho=0.1))
    assert abs(q1.chol[0, 0] - 1.7) < 1e-15


def test_srvn_step_too_large():
    with pytest.raises(StepSizeError) as info:
        srvn_step(scalar(0.0, 2.0), unit_mom(), StepConfig(rho=1.0))
    assert info.value.index == 0


def test_srvn_run_records_error_without_raising():
    prob = ProblemSpec.quadratic([[1.0]], [0.0])
    rec = run_optimizer("srvn", scalar(0.0, 2.0), prob, step_cfg=StepConfig(rho=1.0),
                        on_error="record")
    assert rec.error is not None and rec.error_iteration == 0 and not rec.converged


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_srvn_stays_lower_triangular(d, seed):
    rng = np.random.default_rng(seed)
    prob = random_quadratic(rng, d)
    C = np.tril(0.3 * rng.standard_normal((d, d)), -1) + np.diag(rng.uniform(0.5, 1.5, d))
    q = GaussianParams(rng.standard_normal(d), C)
    dm, dC = srvn_direction(q, moments(q, prob), 1.0)
    assert np.array_equal(dC, np.tril(dC))
    q1 = srvn_step(q, moments(q, prob), StepConfig(rho=1e-3))
    assert np.array_equal(q1.chol, np.tril(q1.chol))


def test_bwgd_fixed_point():
    prob = random_quadratic(np.random.default_rng(2), 3)
    m, V = prob.optimum()
    q = GaussianParams(m, np.linalg.cholesky(V))
    m1, V1 = bwgd_step(m, V, moments(q, prob), 0.1)
    assert np.max(np.abs(V1 - V)) < 1e-12 and np.max(np.abs(m1 - m)) < 1e-12


def test_bwgd_scalar():
    _, V1 = bwgd_step(np.zeros(1), np.array([[2.0]]), unit_mom(), 0.1)
    assert abs(V1[0, 0] - 1.805) < 1e-15


def test_bwgd_slower_than_vn_on_toy():
    prob = toy_regression()
    init = GaussianParams([3.0, -2.0], 2 * np.eye(2))
    cfg = lambda rho: StepConfig(rho=rho, max_iters=20000)
    n_vn = run_optimizer("vn", init, prob, step_cfg=cfg(1.0)).iterations
    # largest Hessian eigenvalue is about 27, so alpha above ~0.035 oscillates
    for alpha in (0.002, 0.005, 0.01, 0.02, 0.03):
        rec = run_optimizer("bwgd", init, prob, step_cfg=cfg(alpha), on_error="record")
        assert rec.error is None and rec.converged
        assert rec.iterations > n_vn


def test_permissible_step_unit_constants():
    c = TheoryConstants(delta=1, M=1, lambda_min=1, xi_l=1, xi_u=1)
    sb = permissible_step(c)
    assert sb.rho1 == 1.0
    assert abs(sb.rho2 - math.sqrt(0.4)) < 1e-15
    assert sb.rho == 1.0
    assert abs(sb.eta - ETA_UNIT) < 1e-15
    assert abs(sb.contraction - CONTRACTION_UNIT) < 1e-15


def test_contraction_tends_to_one():
    prev = 0.0
    for M in (1e1, 1e2, 1e3, 1e4):
        c = TheoryConstants(delta=1, M=M, lambda_min=0.5, xi_l=1, xi_u=1.2)
        sb = permissible_step(c, rule="best")
        assert prev < sb.contraction < 1
        prev = sb.contraction
    assert 1 - prev < 1e-4


def test_best_rule_never_exceeds_cap():
    rng = np.random.default_rng(3)
    for _ in range(200):
        xl = rng.uniform(0.2, 3)
        c = TheoryConstants(delta=rng.uniform(0.1, 1), M=rng.uniform(1, 5),
                            lambda_min=rng.uniform(0.05, 1), xi_l=xl, xi_u=xl * rng.uniform(1, 3))
        sb = permissible_step(c, rule="best")
        assert sb.rho <= max(sb.rho1, sb.rho2) and 0 < sb.contraction < 1
        assert sb.eta >= c.eta(sb.rho1) and sb.eta >= c.eta(sb.rho2)


def test_max_rule_can_fail_to_contract():
    c = TheoryConstants(delta=1, M=1, lambda_min=0.5, xi_l=2, xi_u=2)
    with pytest.raises(TheoryViolationError):
        permissible_step(c, rule="max")


def test_invalid_constants():
    with pytest.raises(TheoryViolationError):
        TheoryConstants(delta=2, M=1, lambda_min=1, xi_l=1, xi_u=1)
    with pytest.raises(ConfigError):
        permissible_step(TheoryConstants(1, 1, 1, 1, 1), rule="fastest")


def test_iteration_counts():
    assert iteration_estimate(TheoryConstants(1, 1, 1, 1, 1), 1e-7, 1e-6) == 0.0
    assert abs(contraction_iterations(0.5, 1.0, 2.0**-10) - 10.0) < 1e-12


def test_power_iteration():
    X = np.random.default_rng(4).standard_normal((30, 5))
    lam = power_iteration(X, tol=1e-12)
    assert abs(lam - np.linalg.eigvalsh(X.T @ X).max()) / lam < 1e-8


def test_run_record_rows_are_contiguous():
    prob = random_quadratic(np.random.default_rng(5), 2)
    rec = run_optimizer("srvn", GaussianParams(np.zeros(2), np.eye(2)), prob,
                        step_cfg=StepConfig(rho=0.05, max_iters=30))
    assert list(rec.column("iter")) == list(range(31))
    assert np.all(np.isfinite(rec.column("neg_elbo")))
    assert np.all(np.diff(rec.column("wall_ms")) >= 0)


def test_unknown_method():
    with pytest.raises(ConfigError):
        run_optimizer("adam", scalar(0, 1), ProblemSpec.quadratic([[1.0]], [0.0]),
                      step_cfg=StepConfig(rho=0.1))
