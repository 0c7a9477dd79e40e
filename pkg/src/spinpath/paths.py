"""Reversed-time Brownian interpolation paths and their pathwise identities.

The interpolation runs a family of Brownian motions B_{i,j} (one per spin
pair, replacing the quenched couplings at t = 1) together with per-site
processes X_i solving

    X_i(t) = eta_i - int_0^t X_i(s)/(1-s) ds + W_i(t),

a Brownian motion reversed in time: X_i(0) = eta_i ~ N(0,1), X_i(t) is
marginally N(0, 1-t), and X_i(1) = 0. X is sampled by its exact Gaussian
transitions rather than an Euler scheme, so the drift singularity at t = 1
never enters: given X(t) = x, X(t') is normal with mean x (1-t')/(1-t) and
variance (1-t') (t'-t)/(1-t), and the endpoint is pinned to zero.

Discretization conventions (they must all match, or pathwise cancellations
break): stochastic integrals are left-point Ito sums, Lebesgue integrals
are left-point Riemann sums, and the W increments entering the Ito sums
are the ones implied by the sampled X through the SDE,
dW = dX + X/(1-t) dt at the left endpoint, which are conditionally
centered. Enumeration feeds every Gibbs average along a path, so these
experiments cap the site count at 10.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import gaussian
from .gibbs import (
    BoundedU,
    PerceptronDisorder,
    SkParams,
    _full_spin_matrix,
    _pair_columns,
    _pair_products,
    as_spins,
    perceptron_energies,
)

PATH_ENUM_CAP = 10


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_k = k/steps on [0, 1]."""

    steps: int

    def __post_init__(self):
        if self.steps < 2:
            raise ValueError(f"need at least 2 steps, got {self.steps}")

    @cached_property
    def times(self) -> np.ndarray:
        t = np.arange(self.steps + 1) / self.steps
        t.setflags(write=False)
        return t

    @property
    def dt(self) -> float:
        return 1.0 / self.steps


def sample_reversed_bm(grid: TimeGrid, eta, rng: np.random.Generator) -> np.ndarray:
    """Trajectories of the reversed-time Brownian motion on the grid.

    `eta` may have any shape; the result has shape (steps+1, *eta.shape).
    The final row is exactly zero.
    """
    eta = np.asarray(eta, dtype=np.float64)
    t = grid.times
    x = np.empty((grid.steps + 1,) + eta.shape)
    x[0] = eta
    z = rng.standard_normal((grid.steps,) + eta.shape)
    for k in range(grid.steps):
        remain = 1.0 - t[k]
        remain_next = 1.0 - t[k + 1]
        shrink = remain_next / remain
        sd = math.sqrt(remain_next * (t[k + 1] - t[k]) / remain)
        x[k + 1] = x[k] * shrink + sd * z[k]
    x[grid.steps] = 0.0
    return x


def sample_brownian(grid: TimeGrid, columns: int, rng: np.random.Generator) -> np.ndarray:
    """Independent standard Brownian motions started at 0, (steps+1, columns)."""
    inc = rng.standard_normal((grid.steps, columns)) * math.sqrt(grid.dt)
    out = np.zeros((grid.steps + 1, columns))
    np.cumsum(inc, axis=0, out=out[1:])
    return out


@dataclass(frozen=True)
class PathState:
    """One realization of the interpolation processes on a time grid.

    b holds the pair Brownian motions in row-major (i, j), i < j column
    order; x holds the per-site reversed-time motions; eta is x[0].
    """

    grid: TimeGrid
    b: np.ndarray
    x: np.ndarray
    eta: np.ndarray
    seed: object = None

    @property
    def n(self) -> int:
        return self.x.shape[1]

    def __post_init__(self):
        k = self.grid.steps + 1
        n = self.x.shape[1]
        if self.b.shape != (k, n * (n - 1) // 2):
            raise ValueError(f"b has shape {self.b.shape}, expected ({k}, {n * (n - 1) // 2})")
        if self.x.shape[0] != k:
            raise ValueError(f"x has {self.x.shape[0]} rows, expected {k}")
        if self.eta.shape != (n,):
            raise ValueError("eta must match the site count")


def sample_sk_path(n: int, grid: TimeGrid, rng: np.random.Generator, seed: object = None) -> PathState:
    """Draw eta, the pair Brownian motions, and the site motions, in that order."""
    eta = rng.standard_normal(n)
    b = sample_brownian(grid, n * (n - 1) // 2, rng)
    x = sample_reversed_bm(grid, eta, rng)
    return PathState(grid=grid, b=b, x=x, eta=eta, seed=seed)


def restrict_path(path: PathState, factor: int) -> PathState:
    """Subsample a path onto a grid coarsened by an integer factor.

    Restriction preserves the law of both processes, so nested-grid
    refinement studies can reuse a single fine path.
    """
    if factor < 1 or path.grid.steps % factor:
        raise ValueError(f"factor {factor} does not divide {path.grid.steps} steps")
    coarse = TimeGrid(steps=path.grid.steps // factor)
    return PathState(
        grid=coarse,
        b=path.b[::factor],
        x=path.x[::factor],
        eta=path.eta,
        seed=path.seed,
    )


def implied_w_increments(path: PathState) -> np.ndarray:
    """Left-point W increments consistent with the sampled X: dX + X/(1-t) dt.

    These are conditionally centered given the path up to each left
    endpoint, so Ito sums against them have exactly zero mean.
    """
    t = path.grid.times
    dt = path.grid.dt
    drift = path.x[:-1] * (dt / (1.0 - t[:-1]))[:, None]
    return np.diff(path.x, axis=0) + drift


def hamiltonian_path(sigma, p: SkParams, q: float, path: PathState) -> np.ndarray:
    """Interpolated energy values -H_t(sigma) at every grid time.

    (beta/sqrt(N)) sum_{i<j} B_{i,j}(t) sigma_i sigma_j
    + beta sqrt(q) sum_i X_i(t) sigma_i + h sum_i sigma_i.
    """
    s = as_spins(sigma, p.n)
    if path.n != p.n:
        raise ValueError(f"path has n={path.n}, params have n={p.n}")
    ii, jj = _pair_columns(p.n)
    pair_vals = s[ii] * s[jj]
    return (
        p.beta / math.sqrt(p.n) * (path.b @ pair_vals)
        + p.beta * math.sqrt(q) * (path.x @ s)
        + p.h * s.sum()
    )


def realized_qv(values: np.ndarray) -> float:
    """Sum of squared increments of a sampled process along its grid."""
    return float(np.sum(np.diff(np.asarray(values, dtype=np.float64)) ** 2))


def qv_rate(p: SkParams, q: float) -> float:
    """Quadratic-variation rate of -H_t per unit time: (N beta^2/2)((N-1)/N + 2q)."""
    return 0.5 * p.n * p.beta**2 * ((p.n - 1) / p.n + 2.0 * q)


def backward_heat_residual(
    phi,
    laplacian,
    k: int,
    t: float,
    grid: TimeGrid,
    n_paths: int,
    rng: np.random.Generator,
    chunk: int = 8192,
) -> tuple[float, float]:
    """Monte Carlo check of the backward-heat identity for X.

    Estimates E[phi(X(t))] - E[phi(eta)] + (1/2) int_0^t E[lap phi(X(s))] ds,
    which vanishes for smooth phi. `phi` and `laplacian` map (rows, k)
    batches to (rows,) values. Returns (estimate, standard error) of the
    per-path residual mean; the time integral uses the trapezoid rule on
    the grid.
    """
    t_idx = int(round(t * grid.steps))
    if not 0 <= t_idx <= grid.steps or abs(t_idx / grid.steps - t) > 1e-12:
        raise ValueError(f"t={t} is not a grid time for steps={grid.steps}")
    weights = np.full(t_idx + 1, grid.dt)
    weights[0] *= 0.5
    weights[-1] *= 0.5

    residuals = np.empty(n_paths)
    done = 0
    while done < n_paths:
        m = min(chunk, n_paths - done)
        eta = rng.standard_normal((m, k))
        x = sample_reversed_bm(grid, eta, rng)  # (steps+1, m, k)
        lap = np.asarray(laplacian(x[: t_idx + 1].reshape(-1, k))).reshape(t_idx + 1, m)
        integral = weights @ lap
        residuals[done : done + m] = (
            np.asarray(phi(x[t_idx])) - np.asarray(phi(x[0])) + 0.5 * integral
        )
        done += m
    mean = float(residuals.mean())
    stderr = float(residuals.std(ddof=1) / math.sqrt(n_paths))
    return mean, stderr


# ---------------------------------------------------------------------------
# enumeration along a path


def _require_path_cap(n: int) -> None:
    if n > PATH_ENUM_CAP:
        raise ValueError(f"n={n} exceeds the path enumeration cap {PATH_ENUM_CAP}")


def _path_energies(p: SkParams, q: float, path: PathState, rows=slice(None)) -> np.ndarray:
    """Energies of every configuration at the selected grid rows, (rows, 2^n)."""
    spins = _full_spin_matrix(p.n)
    pp = _pair_products(p.n)
    e = p.beta / math.sqrt(p.n) * (path.b[rows] @ pp.T)
    e += p.beta * math.sqrt(q) * (path.x[rows] @ spins.T)
    e += p.h * spins.sum(axis=1)[None, :]
    return e


def _tables_from_energies(e: np.ndarray, n: int):
    """(log Z, <sigma_i>, <sigma_i sigma_j>) per row of an energy matrix."""
    spins = _full_spin_matrix(n)
    pp = _pair_products(n)
    mx = e.max(axis=1)
    w = np.exp(e - mx[:, None])
    z = w.sum(axis=1)
    log_z = mx + np.log(z)
    w /= z[:, None]
    return log_z, w @ spins, w @ pp


def rho_derivative_check(
    p: SkParams, q: float, path: PathState, t_index: int, i: int, step: float = 1e-5
) -> tuple[float, float]:
    """Site-field derivative of <sigma_i> two ways: closed form vs central difference.

    The closed form is beta sqrt(q) (1 - <sigma_i>^2); the difference
    quotient perturbs X_i(t) by +-step and re-enumerates.
    """
    _require_path_cap(p.n)
    if not 0 <= i < p.n:
        raise ValueError(f"site index {i} out of range")
    spins = _full_spin_matrix(p.n)

    def site_mean(x_row: np.ndarray) -> float:
        e = p.beta / math.sqrt(p.n) * (_pair_products(p.n) @ path.b[t_index])
        e = e + p.beta * math.sqrt(q) * (spins @ x_row) + p.h * spins.sum(axis=1)
        w = np.exp(e - e.max())
        w /= w.sum()
        return float(np.dot(w, spins[:, i]))

    base = site_mean(path.x[t_index])
    analytic = p.beta * math.sqrt(q) * (1.0 - base * base)
    hi = path.x[t_index].copy()
    lo = path.x[t_index].copy()
    hi[i] += step
    lo[i] -= step
    fd = (site_mean(hi) - site_mean(lo)) / (2.0 * step)
    return analytic, fd


@dataclass(frozen=True)
class DecompositionRecord:
    """Fluctuation decomposition terms at one grid time.

    lhs is the scaled, centered free energy computed by enumeration;
    residual = lhs - (u_n + m1 + m2 - (v1 - v2) - v3).
    """

    t: float
    u_n: float
    m1: float
    m2: float
    v1: float
    v2: float
    v3: float
    lhs: float
    residual: float


def decompose_y(p: SkParams, q: float, path: PathState, e_phi: float | None = None) -> list[DecompositionRecord]:
    """Pathwise fluctuation decomposition at every grid time.

    The centered free energy Y(t) = sqrt(N)(log Z_t / N - log 2
    - beta^2 t (1-q)^2 / 4 - E[log cosh(beta sqrt(q) Y + h)]) is compared
    with the initial-condition term plus two Ito sums minus three
    left-point Riemann integrals:

      u_n  initial Gaussians vs their mean,
      m1   pair averages against dB,
      m2   site averages against the implied dW,
      v1   site averages times X/(1-t),
      v2   (beta^2 q / sqrt(N)) sum_i (1 - <sigma_i>^2), whose mean cancels v1,
      v3   (beta^2 sqrt(N)/4) rho((R - q)^2).

    The discrete residual vanishes only in the grid limit; `e_phi` lets a
    caller reuse a precomputed E[log cosh(beta sqrt(q) Y + h)].
    """
    _require_path_cap(p.n)
    if path.n != p.n:
        raise ValueError(f"path has n={path.n}, params have n={p.n}")
    n = p.n
    sq = math.sqrt(q)
    if e_phi is None:
        e_phi = gaussian._ladder(
            lambda rule: float(np.dot(rule.weights, gaussian.log_cosh(p.beta * sq * rule.nodes + p.h)))
        )

    e = _path_energies(p, q, path)
    log_z, m_tab, c_tab = _tables_from_energies(e, n)

    t = path.grid.times
    dt = path.grid.dt
    u_n = math.sqrt(n) * (float(np.mean(gaussian.log_cosh(p.beta * sq * path.eta + p.h))) - e_phi)

    db = np.diff(path.b, axis=0)
    dw = implied_w_increments(path)

    def cum(step_terms: np.ndarray) -> np.ndarray:
        out = np.zeros(path.grid.steps + 1)
        np.cumsum(step_terms, out=out[1:])
        return out

    m1 = cum((c_tab[:-1] * db).sum(axis=1)) * (p.beta / n)
    m2 = cum((m_tab[:-1] * dw).sum(axis=1)) * (p.beta * sq / math.sqrt(n))
    v1_rate = (m_tab[:-1] * path.x[:-1] / (1.0 - t[:-1])[:, None]).sum(axis=1)
    v1 = cum(v1_rate * dt) * (p.beta * sq / math.sqrt(n))
    v2_rate = (1.0 - m_tab[:-1] ** 2).sum(axis=1)
    v2 = cum(v2_rate * dt) * (p.beta**2 * q / math.sqrt(n))

    rho_r = (m_tab**2).sum(axis=1) / n
    rho_r2 = (n + 2.0 * (c_tab**2).sum(axis=1)) / (n * n)
    rho_cent = rho_r2 - 2.0 * q * rho_r + q * q
    v3 = cum(rho_cent[:-1] * dt) * (p.beta**2 * math.sqrt(n) / 4.0)

    lhs = math.sqrt(n) * (log_z / n - math.log(2.0) - p.beta**2 * t * (1.0 - q) ** 2 / 4.0 - e_phi)
    residual = lhs - (u_n + m1 + m2 - (v1 - v2) - v3)

    return [
        DecompositionRecord(
            t=float(t[k]),
            u_n=u_n,
            m1=float(m1[k]),
            m2=float(m2[k]),
            v1=float(v1[k]),
            v2=float(v2[k]),
            v3=float(v3[k]),
            lhs=float(lhs[k]),
            residual=float(residual[k]),
        )
        for k in range(path.grid.steps + 1)
    ]


# ---------------------------------------------------------------------------
# perceptron stochastic path


@dataclass(frozen=True)
class PerceptronPathSample:
    """One pattern's interpolation: replica projections and Gibbs averages.

    s[k, l] is the interpolated projection for replica l at time t_k;
    rho[k, l] is the Gibbs average of exp(u(S(t_k))) under the measure
    built from the first m-1 quenched patterns, using replica l's hat
    process. b, x, x_hat are the underlying paths.
    """

    grid: TimeGrid
    s: np.ndarray
    rho: np.ndarray
    b: np.ndarray
    x: np.ndarray
    x_hat: np.ndarray
    q: float


def perceptron_path_sample(
    replicas,
    dis: PerceptronDisorder,
    u: BoundedU,
    m: int,
    grid: TimeGrid,
    rng: np.random.Generator,
    q: float | None = None,
) -> PerceptronPathSample:
    """Sample the pattern-m interpolation S(t) for one or more replicas.

    S^l(t) = N^{-1/2} sum_i B_i(t) sigma^l_i + sqrt(q_m) X(t)
           + sqrt(1-q_m) Xhat^l(t), with X and Xhat reversed-time Brownian
    motions; at t = 1 the X terms vanish and S equals the quenched
    projection with couplings B(1), at t = 0 it equals
    sqrt(q_m) eta + sqrt(1-q_m) etahat^l. q_m defaults to the fixed point
    at load m/N.
    """
    n = dis.n
    _require_path_cap(n)
    if m < 1 or m - 1 > dis.m:
        raise ValueError(f"pattern index m={m} needs 1 <= m and m-1 <= {dis.m} quenched patterns")
    sigma = np.stack([as_spins(s_l, n) for s_l in np.atleast_2d(replicas)])
    n_rep = sigma.shape[0]
    if q is None:
        q = gaussian.solve_perceptron_fp(m / n, u).q

    eta = rng.standard_normal()
    eta_hat = rng.standard_normal(n_rep)
    b = sample_brownian(grid, n, rng)
    x = sample_reversed_bm(grid, np.float64(eta), rng)
    x_hat = sample_reversed_bm(grid, eta_hat, rng)

    sq, sq1 = math.sqrt(q), math.sqrt(1.0 - q)
    s_vals = (b @ sigma.T) / math.sqrt(n) + sq * x[:, None] + sq1 * x_hat

    weights_energy = perceptron_energies(dis, u, m - 1)
    w = np.exp(weights_energy - weights_energy.max())
    w /= w.sum()
    spins = _full_spin_matrix(n)
    fields = (b @ spins.T) / math.sqrt(n)  # (steps+1, 2^n)
    rho = np.empty((grid.steps + 1, n_rep))
    for l in range(n_rep):
        vals = np.exp(u.u(fields + (sq * x + sq1 * x_hat[:, l])[:, None]))
        rho[:, l] = vals @ w
    return PerceptronPathSample(grid=grid, s=s_vals, rho=rho, b=b, x=x, x_hat=x_hat, q=q)
