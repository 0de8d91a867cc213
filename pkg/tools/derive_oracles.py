"""Independent reference values frozen into the unit tests.

Nothing here imports ngvi.  Each value comes from a different route than the
library uses: symbolic algebra (sympy), arbitrary precision (mpmath) or
adaptive numerical integration (scipy.integrate.quad).  Run it and paste the
printed numbers into the tests when a reference needs to change.
"""

import mpmath as mp
import numpy as np
import sympy as s
from scipy import integrate, stats

mp.mp.dps = 30


def show(label, value):
    print(f"{label:<44} {float(value)!r}")


def entropy_refs():
    show("neg_entropy d=1 chol=1", -stats.norm(0, 1).entropy())
    show("neg_entropy d=2 chol=diag(1,2)",
         -stats.multivariate_normal(np.zeros(2), np.diag([1.0, 4.0])).entropy())


def kl_quad(m0, v0, m1, v1):
    p, q = stats.norm(m0, np.sqrt(v0)), stats.norm(m1, np.sqrt(v1))
    f = lambda x: p.pdf(x) * (p.logpdf(x) - q.logpdf(x))
    return integrate.quad(f, -40, 40, limit=200, epsabs=1e-14)[0]


def kl_refs():
    show("KL N(0,1) || N(0,4)", kl_quad(0, 1, 0, 4))
    show("KL N(1,1) || N(0,2)", kl_quad(1, 1, 0, 2))
    show("KL N(0,2) || N(1,1)", kl_quad(0, 2, 1, 1))


def logistic_refs():
    sig = lambda a: 1 / (1 + mp.e ** (-a))
    phi = lambda a: mp.npdf(a)
    # x=[1], y=+1, m=0, V=1
    show("E[s(a)(1-s(a))], a~N(0,1)",
         mp.quad(lambda a: sig(a) * (1 - sig(a)) * phi(a), [-mp.inf, 0, mp.inf]))
    show("softplus(-10)", mp.log1p(mp.e ** -10))
    # two-point, two-feature instance used in the oracle tests
    X = [[1.0, -0.5], [0.3, 2.0]]
    y = [1.0, -1.0]
    m = [0.2, -0.1]
    C = [[0.7, 0.0], [0.2, 0.5]]
    beta = 0.1
    V = [[sum(C[i][k] * C[j][k] for k in range(2)) for j in range(2)] for i in range(2)]
    loss = mp.mpf(0)
    g = [mp.mpf(0), mp.mpf(0)]
    H = [[mp.mpf(0)] * 2 for _ in range(2)]
    for xi, yi in zip(X, y):
        mu = sum(xi[k] * m[k] for k in range(2))
        sd = mp.sqrt(sum(xi[j] * V[j][k] * xi[k] for j in range(2) for k in range(2)))
        dens = lambda a: mp.npdf(a, mu, sd)
        e0 = mp.quad(lambda a: mp.log1p(mp.e ** (-yi * a)) * dens(a), [-mp.inf, mu, mp.inf])
        e1 = mp.quad(lambda a: -yi * sig(-yi * a) * dens(a), [-mp.inf, mu, mp.inf])
        e2 = mp.quad(lambda a: sig(a) * (1 - sig(a)) * dens(a), [-mp.inf, mu, mp.inf])
        loss += e0
        for j in range(2):
            g[j] += e1 * xi[j]
            for k in range(2):
                H[j][k] += e2 * xi[j] * xi[k]
    loss += beta / 2 * (sum(v * v for v in m) + V[0][0] + V[1][1])
    for j in range(2):
        g[j] += beta * m[j]
        H[j][j] += beta
    show("two-point logistic expected loss", loss)
    for j in range(2):
        show(f"two-point logistic grad[{j}]", g[j])
    for j, k in ((0, 0), (0, 1), (1, 1)):
        show(f"two-point logistic hess[{j},{k}]", H[j][k])


def nonconvex_refs():
    t = s.symbols("t")
    r = t**2 / (1 + t**2)
    for v in (s.Rational(3, 10), s.Rational(-6, 5)):
        show(f"d/dt t^2/(1+t^2) at {v}", r.diff(t).subs(t, v))
        show(f"d2/dt2 t^2/(1+t^2) at {v}", r.diff(t, 2).subs(t, v))


def fisher_refs():
    # Fisher information of N(m, c^2) in (m, c), by symbolic integration
    x, m = s.symbols("x m", real=True)
    c = s.symbols("c", positive=True)
    logp = -s.log(c) - s.log(2 * s.pi) / 2 - (x - m) ** 2 / (2 * c**2)
    dens = s.exp(logp)
    score = [logp.diff(m), logp.diff(c)]
    F = s.Matrix(2, 2, lambda i, j: s.simplify(
        s.integrate(score[i] * score[j] * dens, (x, -s.oo, s.oo))))
    Finv = s.simplify(F.inv())
    print("1-D Fisher information (m, c):", F.tolist())
    print("inverse:", Finv.tolist())
    for cv in (1, s.Rational(1, 2), 2):
        show(f"F_C^-1 at c={cv}", Finv[1, 1].subs(c, cv))


def cholesky_refs():
    C = s.Matrix([[2, 0], [1, 1]])
    V = C * C.T
    print("V for chol [[2,0],[1,1]]:", V.tolist(), "precision:", V.inv().tolist())


def step_refs():
    # scalar hand arithmetic, done in exact rationals
    q = s.Rational
    print("VN S1 (S0=2, H=1, rho=1/2):", (1 - q(1, 2)) * 2 + q(1, 2) * 1)
    C, H, rho = 2, 1, q(1, 10)
    print("SR-VN C1 (C=2, H=1, rho=0.1):", C - rho * C * q(1, 2) * (C * H * C - 1))
    V, a = 2, q(1, 10)
    M = 1 - a * (H - q(1, 2))
    print("BW-GD V1 (V=2, H=1, alpha=0.1):", M * V * M)
    print("eta at unit constants:", s.N(s.sqrt(q(5, 2)) - q(5, 4), 17),
          "contraction:", s.N(1 - 2 * (s.sqrt(q(5, 2)) - q(5, 4)), 17))


if __name__ == "__main__":
    entropy_refs()
    kl_refs()
    logistic_refs()
    nonconvex_refs()
    fisher_refs()
    cholesky_refs()
    step_refs()
