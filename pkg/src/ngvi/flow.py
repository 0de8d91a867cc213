"""Continuous-time natural-gradient flow and its integrators.

The flow is available in two coordinate systems which trace the same curve
of Gaussians:

    (m, V):  dV/dt = gamma V - V H V,          dm/dt = -V g
    (m, C):  dC/dt = C tril(gamma I - C^T H C), dm/dt = -C C^T g

Forward Euler in (m, C) with step rho is exactly one SR-VN step.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FactorizationError, IntegrationError
from .gaussian import GaussianParams, elbo, mv_to_params, symmetrize
from .oracles import moments
from .optimizers import TheoryConstants, srvn_direction


@dataclass(frozen=True)
class FlowConfig:
    parameterization: str = "mc"
    scheme: str = "rk4"
    h: float = 1e-3
    T: float = 1.0
    record_every: int = 1

    def __post_init__(self):
        if self.parameterization not in ("mv", "mc"):
            raise ConfigError(f"unknown parameterization {self.parameterization!r}")
        if self.scheme not in ("euler", "rk4"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if not (0 < self.h < self.T):
            raise ConfigError("need 0 < h < T")
        if self.record_every < 1:
            raise ConfigError("record_every must be at least 1")


@dataclass
class FlowTrajectory:
    times: np.ndarray
    states: list
    kl_gaps: np.ndarray = None
    parameterization: str = "mc"
    h: float = None
    monotone: bool = True

    def covariances(self):
        if self.parameterization == "mc":
            return [q.cov for q in self.states]
        return [V for _, V in self.states]

    def means(self):
        if self.parameterization == "mc":
            return [q.mean for q in self.states]
        return [m for m, _ in self.states]


def flow_rhs_mv(mean, V, mom, gamma=1.0):
    V = np.asarray(V, dtype=float)
    dV = symmetrize(gamma * V - V @ mom.hess @ V)
    return -(V @ mom.grad), dV


def flow_rhs_mc(q, mom, gamma=1.0):
    return srvn_direction(q, mom, gamma)


def _as_params(state, param):
    if param == "mc":
        return state
    return mv_to_params(*state)


def _axpy(state, h, deriv, param):
    # state + h * deriv, in the matching coordinates
    dm, dX = deriv
    if param == "mc":
        return GaussianParams(state.mean + h * dm, state.chol + h * dX)
    return state[0] + h * dm, symmetrize(state[1] + h * dX)


def _rhs(state, problem, ocfg, param):
    gamma = problem.gamma
    q = _as_params(state, param)
    mom = moments(q, problem, ocfg)
    if param == "mc":
        return flow_rhs_mc(q, mom, gamma)
    return flow_rhs_mv(state[0], state[1], mom, gamma)


def _step(state, h, problem, ocfg, param, scheme):
    k1 = _rhs(state, problem, ocfg, param)
    if scheme == "euler":
        return _axpy(state, h, k1, param)
    k2 = _rhs(_axpy(state, h / 2, k1, param), problem, ocfg, param)
    k3 = _rhs(_axpy(state, h / 2, k2, param), problem, ocfg, param)
    k4 = _rhs(_axpy(state, h, k3, param), problem, ocfg, param)
    dm = (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]) / 6
    dX = (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]) / 6
    return _axpy(state, h, (dm, dX), param)


def _integrate(init, problem, ocfg, cfg, h, record_every, l_star):
    param = cfg.parameterization
    state = init if param == "mc" else (np.array(init.mean), init.cov)
    n_steps = int(round(cfg.T / h))
    times, states = [0.0], [state]
    for k in range(1, n_steps + 1):
        try:
            state = _step(state, h, problem, ocfg, param, cfg.scheme)
            _as_params(state, param)
        except (FactorizationError, np.linalg.LinAlgError) as exc:
            raise IntegrationError("state left the positive-definite cone",
                                   last_valid_time=(k - 1) * h) from exc
        if k % record_every == 0 or k == n_steps:
            times.append(k * h)
            states.append(state)
    gaps = None
    if l_star is not None:
        gaps = np.array([elbo(_as_params(s, param), problem, ocfg) - l_star for s in states])
    return np.array(times), states, gaps


def integrate_flow(init, problem, oracle_cfg, flow_cfg, l_star=None, max_halvings=3):
    """Integrate the flow from ``init`` over [0, T].

    When ``l_star`` is given the objective gap is recorded.  For RK4 a gap
    that increases along the path is treated as a step-size problem: h is
    halved (up to ``max_halvings`` times) before the trajectory is flagged
    as non-monotone.
    """
    cfg = flow_cfg
    h, every = cfg.h, cfg.record_every
    for attempt in range(max_halvings + 1):
        times, states, gaps = _integrate(init, problem, oracle_cfg, cfg, h, every, l_star)
        monotone = True
        if gaps is not None and cfg.scheme == "rk4":
            tol = 1e-12 * max(1.0, abs(l_star))
            monotone = bool(np.all(np.diff(gaps) <= tol))
        if monotone or attempt == max_halvings:
            break
        h, every = h / 2, every * 2
    if not monotone:
        warnings.warn("objective gap not monotone after step halving", RuntimeWarning)
    return FlowTrajectory(times, states, gaps, cfg.parameterization, h, monotone)


def trajectory_constants(traj, delta, M):
    """Assumption-style constants measured along a trajectory."""
    covs = traj.covariances()
    lam = min(float(np.linalg.eigvalsh(V)[0]) for V in covs)
    frob = [math.sqrt(float(np.trace(V))) for V in covs]
    return TheoryConstants(delta=delta, M=M, lambda_min=lam, xi_l=min(frob), xi_u=max(frob))


@dataclass(frozen=True)
class DecayReport:
    slope: float
    bound_slope: float
    bound_satisfied: bool
    worst_ratio: float
    excluded: int


def lyapunov_report(traj, consts, l_star=None, slack=1.05, floor=1e-13):
    """Compare the recorded objective gap with exp(-2 mu t) times its start."""
    gaps = traj.kl_gaps
    if gaps is None:
        raise ConfigError("trajectory has no recorded gaps")
    t = traj.times
    if np.any(gaps <= 0):
        warnings.warn("non-positive objective gap hit the numerical floor", RuntimeWarning)
    keep = gaps > floor
    g0 = gaps[0]
    bound = np.exp(-2 * consts.mu * t) * g0
    ok = gaps <= bound * slack + floor
    ratio = np.max(gaps[keep] / bound[keep]) if np.any(keep) else 0.0
    slope = math.nan
    if np.count_nonzero(keep) >= 2:
        slope = float(np.polyfit(t[keep], np.log(gaps[keep]), 1)[0])
    return DecayReport(slope, -2 * consts.mu, bool(np.all(ok)), float(ratio),
                       int(np.count_nonzero(~keep)))
