"""Gaussian expectations, integration by parts, and fixed-point constants.

All expectations over standard normal variables are evaluated with
Gauss-Hermite quadrature renormalized to the N(0,1) weight: nodes are
scaled by sqrt(2) and weights divided by sqrt(pi), so sum(w) = 1 and
E[f(Y)] ~= sum_i w_i f(z_i). Solvers re-run on a doubling node ladder
(64 -> 512) until the answer moves by less than 1e-12.

The module owns every closed-form constant of the high-temperature
analysis:

* the SK overlap fixed point q = E[tanh^2(beta sqrt(q) Y + h)] and the
  fluctuation variances nu^2 = Var(log cosh(beta sqrt(q) Y + h)),
  tau^2 = nu^2 - beta^2 q^2 / 2;
* the inverse-temperature threshold beta_0 solving
  sqrt(162) * beta * exp(16 beta^2) = 1;
* the perceptron pair (q_m, r_m) solving q = E[tanh^2(sqrt(r) z)],
  r = alpha_m E[Psi^2(sqrt(q) z, sqrt(1-q))], the per-pattern increment
  statistics of xi = log E^[exp(u(sqrt(q) eta + sqrt(1-q) eta^))], the
  free-energy functional Phi(m), and tau^2 = (1/alpha) int_0^alpha Q.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_hermite

from .gibbs import BoundedU

NODE_LADDER = (64, 128, 256, 512)
LADDER_TOL = 1e-12
PSI_SMALL_Y = 1e-6


class NonConvergenceError(RuntimeError):
    """Raised when a fixed-point iteration fails to meet its tolerance."""


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights for expectations against the standard normal."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.nodes.ndim != 1 or self.nodes.shape != self.weights.shape:
            raise ValueError("nodes and weights must be matching 1-D arrays")
        if self.nodes.size < 2:
            raise ValueError("need at least 2 nodes")


@functools.lru_cache(maxsize=16)
def gauss_hermite_rule(n: int = 64) -> QuadratureRule:
    """Gauss-Hermite rule with unit total mass for the N(0,1) weight."""
    x, w = roots_hermite(n)
    nodes = np.sqrt(2.0) * x
    weights = w / np.sqrt(np.pi)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(nodes=nodes, weights=weights)


def gh_expect(f, rule: QuadratureRule | None = None) -> float:
    """E[f(Y)] for Y ~ N(0,1) by quadrature; f must be finite at all nodes."""
    rule = rule or gauss_hermite_rule()
    vals = np.asarray(f(rule.nodes), dtype=np.float64)
    if not np.all(np.isfinite(vals)):
        raise ValueError("integrand is not finite at a quadrature node")
    return float(np.dot(rule.weights, vals))


def _ladder(evaluate, tol: float = LADDER_TOL) -> float:
    """Run `evaluate(rule)` on the node ladder until the value stabilizes."""
    prev = None
    val = None
    for n in NODE_LADDER:
        val = evaluate(gauss_hermite_rule(n))
        if prev is not None and abs(val - prev) < tol:
            return val
        prev = val
    return val


def log_cosh(x) -> np.ndarray:
    """Overflow-safe log(cosh(x))."""
    a = np.abs(np.asarray(x, dtype=np.float64))
    return a + np.log1p(np.exp(-2.0 * a)) - np.log(2.0)


# ---------------------------------------------------------------------------
# Gaussian integration by parts


def _gaussian_factor(cov: np.ndarray) -> np.ndarray:
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError(f"covariance must be square, got shape {cov.shape}")
    if not np.allclose(cov, cov.T, atol=1e-12):
        raise ValueError("covariance must be symmetric")
    evals, evecs = np.linalg.eigh(cov)
    if evals.min() < -1e-10:
        raise ValueError(f"covariance must be positive semidefinite, min eigenvalue {evals.min():g}")
    return evecs * np.sqrt(np.clip(evals, 0.0, None))


def _fd_gradient(psi, y: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    g = np.empty_like(y)
    for j in range(y.shape[1]):
        hi = y.copy()
        lo = y.copy()
        hi[:, j] += eps
        lo[:, j] -= eps
        g[:, j] = (np.asarray(psi(hi)) - np.asarray(psi(lo))) / (2.0 * eps)
    return g


def ibp_residual(
    psi,
    cov,
    i: int,
    grad=None,
    method: str = "quadrature",
    nodes: int = 32,
    n_samples: int = 1_000_000,
    rng: np.random.Generator | None = None,
) -> float:
    """E[psi(Y) Y_i] - sum_j E[Y_i Y_j] E[d_j psi(Y)], which should vanish.

    `psi` maps (n, k) row batches to (n,) values; `grad`, if given, maps
    them to (n, k) gradients, otherwise central differences are used.
    Quadrature mode builds a tensor Gauss-Hermite grid (k <= 3); Monte
    Carlo mode draws `n_samples` correlated normal rows.
    """
    cov = np.asarray(cov, dtype=np.float64)
    a = _gaussian_factor(cov)
    k = cov.shape[0]
    if not 0 <= i < k:
        raise ValueError(f"component index {i} out of range for k={k}")
    if method == "quadrature":
        if k > 3:
            raise ValueError("tensor quadrature supported for k <= 3; use method='mc'")
        rule = gauss_hermite_rule(nodes)
        grids = np.meshgrid(*([rule.nodes] * k), indexing="ij")
        z = np.stack([g.ravel() for g in grids], axis=1)
        w_grids = np.meshgrid(*([rule.weights] * k), indexing="ij")
        w = np.prod(np.stack([g.ravel() for g in w_grids], axis=1), axis=1)
    elif method == "mc":
        rng = rng or np.random.default_rng(0)
        z = rng.standard_normal((int(n_samples), k))
        w = np.full(z.shape[0], 1.0 / z.shape[0])
    else:
        raise ValueError(f"unknown method {method!r}")
    y = z @ a.T
    vals = np.asarray(psi(y), dtype=np.float64)
    lhs = float(np.dot(w, vals * y[:, i]))
    g = np.asarray(grad(y)) if grad is not None else _fd_gradient(psi, y)
    rhs = float(np.dot(cov[i], w @ g))
    return lhs - rhs


# ---------------------------------------------------------------------------
# SK constants


@dataclass(frozen=True)
class SkFixedPoint:
    q: float
    residual: float
    iterations: int


def solve_q_sk(beta: float, h: float, tol: float = 1e-12, max_iter: int = 10_000) -> SkFixedPoint:
    """Damped iteration for q = E[tanh^2(beta sqrt(q) Y + h)].

    At beta = 0 the map is constant and the fixed point tanh(h)^2 is
    returned directly.
    """
    if beta < 0.0 or h < 0.0:
        raise ValueError("beta and h must be >= 0")
    if beta == 0.0:
        return SkFixedPoint(q=math.tanh(h) ** 2, residual=0.0, iterations=0)

    state = {"q": math.tanh(h) ** 2, "iters": 0, "res": np.inf}

    def solve_at(rule: QuadratureRule) -> float:
        q = state["q"]
        for it in range(max_iter):
            t = gh_expect(lambda z: np.tanh(beta * math.sqrt(q) * z + h) ** 2, rule)
            res = abs(q - t)
            if res <= tol:
                state.update(iters=state["iters"] + it + 1, res=res, q=q)
                return q
            q = 0.5 * q + 0.5 * t
        raise NonConvergenceError(
            f"q fixed point did not converge in {max_iter} iterations (beta={beta}, h={h})"
        )

    q = _ladder(solve_at)
    return SkFixedPoint(q=q, residual=state["res"], iterations=state["iters"])


def beta0_equation(beta: float) -> float:
    """The strictly increasing map sqrt(162) * beta * exp(16 beta^2)."""
    return math.sqrt(162.0) * beta * math.exp(16.0 * beta * beta)


def beta0(max_iter: int = 200) -> float:
    """High-temperature threshold: root of beta0_equation(beta) = 1.

    Bisection on [0, 0.1]; the map is strictly increasing and exceeds 1 at
    the right endpoint, so the bracket is valid.
    """
    lo, hi = 0.0, 0.1
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if beta0_equation(mid) < 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def sk_variances(beta: float, h: float, tol: float = 1e-12) -> tuple[float, float, float]:
    """(q, nu^2, tau^2) with nu^2 = Var(log cosh(beta sqrt(q) Y + h)).

    tau^2 = nu^2 - beta^2 q^2 / 2 is the limiting variance of the scaled,
    centered free energy.
    """
    q = solve_q_sk(beta, h, tol=tol).q
    b = beta * math.sqrt(q)
    if b == 0.0:
        return q, 0.0, 0.0

    def var_at(rule: QuadratureRule) -> float:
        vals = log_cosh(b * rule.nodes + h)
        mean = float(np.dot(rule.weights, vals))
        return float(np.dot(rule.weights, (vals - mean) ** 2))

    nu2 = _ladder(var_at)
    return q, nu2, nu2 - 0.5 * beta * beta * q * q


# ---------------------------------------------------------------------------
# perceptron constants


def psi_eval(x: float, y: float, u: BoundedU, rule: QuadratureRule | None = None) -> float:
    """Psi(x, y) = E[xi exp(u(x + xi y))] / (y E[exp(u(x + xi y))]).

    For y below a small threshold the equivalent integration-by-parts form
    E[u'(x + xi y) e^u] / E[e^u] is used, removing the 0/0 at y = 0 without
    changing the value.
    """
    if y < 0.0:
        raise ValueError("y must be >= 0")
    rule = rule or gauss_hermite_rule()
    pts = x + rule.nodes * y
    ew = np.exp(u.u(pts))
    den = float(np.dot(rule.weights, ew))
    if y >= PSI_SMALL_Y:
        num = float(np.dot(rule.weights, rule.nodes * ew))
        return num / (y * den)
    num = float(np.dot(rule.weights, u.du(pts) * ew))
    return num / den


def _psi_sq_expect(q: float, u: BoundedU, rule: QuadratureRule) -> float:
    """E_z[Psi^2(sqrt(q) z, sqrt(1-q))] on a tensor grid of the rule."""
    y = math.sqrt(max(1.0 - q, 0.0))
    pts = math.sqrt(max(q, 0.0)) * rule.nodes[:, None] + y * rule.nodes[None, :]
    ew = np.exp(u.u(pts))
    den = ew @ rule.weights
    if y >= PSI_SMALL_Y:
        num = ew @ (rule.weights * rule.nodes)
        psi = num / (y * den)
    else:
        num = (u.du(pts) * ew) @ rule.weights
        psi = num / den
    return float(np.dot(rule.weights, psi * psi))


@dataclass(frozen=True)
class PerceptronFixedPoint:
    q: float
    r: float
    alpha: float
    q_residual: float
    r_residual: float
    iterations: int


def solve_perceptron_fp(
    alpha: float, u: BoundedU, tol: float = 1e-12, max_iter: int = 10_000
) -> PerceptronFixedPoint:
    """Damped alternating solve of q = E[tanh^2(sqrt(r) z)], r = alpha E[Psi^2].

    alpha = 0 and u == 0 force (q, r) = (0, 0) exactly, so those cases are
    returned without iteration.
    """
    if alpha < 0.0:
        raise ValueError("alpha must be >= 0")
    if alpha == 0.0 or u.bound == 0.0:
        return PerceptronFixedPoint(q=0.0, r=0.0, alpha=alpha, q_residual=0.0, r_residual=0.0, iterations=0)

    state = {"q": 0.1, "r": 0.1 * alpha, "iters": 0, "qres": np.inf, "rres": np.inf}

    def solve_at(rule: QuadratureRule) -> float:
        q, r = state["q"], state["r"]
        for it in range(max_iter):
            tq = gh_expect(lambda z: np.tanh(math.sqrt(max(r, 0.0)) * z) ** 2, rule)
            q = 0.5 * q + 0.5 * tq
            tr = alpha * _psi_sq_expect(q, u, rule)
            r = 0.5 * r + 0.5 * tr
            qres = abs(q - gh_expect(lambda z: np.tanh(math.sqrt(max(r, 0.0)) * z) ** 2, rule))
            rres = abs(r - alpha * _psi_sq_expect(q, u, rule))
            if qres <= tol and rres <= tol:
                state.update(q=q, r=r, iters=state["iters"] + it + 1, qres=qres, rres=rres)
                return q + r
        raise NonConvergenceError(
            f"perceptron fixed point did not converge in {max_iter} iterations (alpha={alpha})"
        )

    _ladder(solve_at)
    return PerceptronFixedPoint(
        q=state["q"],
        r=state["r"],
        alpha=alpha,
        q_residual=state["qres"],
        r_residual=state["rres"],
        iterations=state["iters"],
    )


@dataclass(frozen=True)
class XiStatistics:
    """Moments of xi = log E^[exp(u(sqrt(q) eta + sqrt(1-q) eta^))]."""

    mean: float
    variance: float
    fourth_moment: float


def _xi_values(q: float, u: BoundedU, rule: QuadratureRule) -> np.ndarray:
    """xi as a function of the outer Gaussian eta, one value per node."""
    pts = math.sqrt(max(q, 0.0)) * rule.nodes[:, None] + math.sqrt(max(1.0 - q, 0.0)) * rule.nodes[None, :]
    inner = np.exp(u.u(pts)) @ rule.weights
    return np.log(inner)


def xi_moments(alpha: float, u: BoundedU, tol: float = 1e-12) -> XiStatistics:
    """Mean, variance Q(alpha), and central fourth moment of xi at alpha."""
    q = solve_perceptron_fp(alpha, u, tol=tol).q
    state = {}

    def var_at(rule: QuadratureRule) -> float:
        xi = _xi_values(q, u, rule)
        mean = float(np.dot(rule.weights, xi))
        centered = xi - mean
        var = float(np.dot(rule.weights, centered**2))
        state.update(mean=mean, var=var, fourth=float(np.dot(rule.weights, centered**4)))
        return var

    _ladder(var_at)
    return XiStatistics(mean=state["mean"], variance=state["var"], fourth_moment=state["fourth"])


def phi_m(n: int, m: int, u: BoundedU, tol: float = 1e-12) -> float:
    """Replica-symmetric free-energy value Phi(m) at pattern load alpha_m = m/n.

    Phi(m) = log 2 + E[log cosh(sqrt(r_m) Y)] - r_m (1 - q_m) / 2
           + alpha_m E[log E^[exp(u(theta_m))]].
    """
    if n < 1 or m < 0:
        raise ValueError("need n >= 1 and m >= 0")
    alpha = m / n
    fp = solve_perceptron_fp(alpha, u, tol=tol)
    if m == 0:
        return math.log(2.0)
    cosh_term = _ladder(
        lambda rule: float(np.dot(rule.weights, log_cosh(math.sqrt(max(fp.r, 0.0)) * rule.nodes)))
    )
    xi_mean = _ladder(lambda rule: float(np.dot(rule.weights, _xi_values(fp.q, u, rule))))
    return math.log(2.0) + cosh_term - 0.5 * fp.r * (1.0 - fp.q) + alpha * xi_mean


def tau2_perceptron(alpha: float, u: BoundedU, panels: int = 64, q_func=None) -> float:
    """(1/alpha) * int_0^alpha Q(x) dx by composite Simpson.

    Q(x) is the variance of xi at load x, with Q(0) = 0 used as the known
    left endpoint. `q_func` substitutes a synthetic Q for testing the
    integration path.
    """
    if alpha <= 0.0:
        raise ValueError("alpha must be > 0")
    if panels < 2 or panels % 2:
        raise ValueError("panels must be a positive even count")
    if q_func is None:
        q_func = lambda x: 0.0 if x == 0.0 else xi_moments(x, u).variance
    xs = np.linspace(0.0, alpha, panels + 1)
    qs = np.array([q_func(float(x)) for x in xs])
    h = alpha / panels
    integral = h / 3.0 * (qs[0] + qs[-1] + 4.0 * qs[1:-1:2].sum() + 2.0 * qs[2:-1:2].sum())
    return integral / alpha


def delta_phi_residual(n: int, m: int, u: BoundedU) -> float:
    """Phi(m) - Phi(m-1) - E[xi_m]/n, which is O(1/n^2).

    The increment of the free-energy functional matches the per-pattern
    mean E[xi] at load m/n up to the midpoint-rule error of the underlying
    alpha-integral; with u == 0 every term vanishes identically.
    """
    if m < 1:
        raise ValueError("need m >= 1")
    if u.bound == 0.0:
        return 0.0
    xi_mean = xi_moments(m / n, u).mean
    return phi_m(n, m, u) - phi_m(n, m - 1, u) - xi_mean / n
