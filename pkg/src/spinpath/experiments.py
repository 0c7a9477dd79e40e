"""Disorder-level Monte Carlo experiments for the free-energy limit theorems.

Each experiment draws many independent disorder samples, computes an exact
(enumeration-based) per-sample quantity, and aggregates. Per-sample
generators are derived by hashing (master seed, sample index), so results
are bit-identical regardless of how samples are scheduled across worker
threads; aggregation always runs in sample-index order.

The SK fluctuation observable at a disorder draw g is

    y = sqrt(N) (p_N - log 2 - beta^2 (1-q)^2 / 4 - E[log cosh(beta sqrt(q) Y + h)])

with p_N = log(Z_N)/N from exact enumeration; its disorder variance is
compared against tau^2 from the closed-form constants. The perceptron
observable is sqrt(N) (log(Z_{N,M})/N - Phi(M)) against
tau^2 = (1/alpha) int_0^alpha Q. At beta = 0 (SK) and u == 0 (perceptron)
the partition function factorizes exactly and every centered sample is
identically zero; those degenerate runs short-circuit to exact zeros.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr
from threadpoolctl import threadpool_limits

from . import gaussian, gibbs

# Asymptotic two-sided Kolmogorov-Smirnov critical value at the 5% level.
KS_CRIT_5PCT = 1.35810
PERCEPTRON_ENUM_CAP = 16


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of one disorder-level experiment."""

    model: str
    n: int
    beta: float = 0.05
    h: float = 0.3
    alpha: float = 0.125
    u_scale: float = 0.2
    n_disorder: int = 200
    seed: int = 42
    steps: int = 512
    threads: int = 1

    def __post_init__(self):
        if self.model not in ("sk", "perceptron"):
            raise ValueError(f"model must be 'sk' or 'perceptron', got {self.model!r}")
        cap = gibbs.ENUM_CAP if self.model == "sk" else PERCEPTRON_ENUM_CAP
        if not 1 <= self.n <= cap:
            raise ValueError(f"n={self.n} outside [1, {cap}] for model {self.model}")
        if self.n_disorder < 2:
            raise ValueError(f"need n_disorder >= 2, got {self.n_disorder}")
        if self.beta < 0.0 or self.h < 0.0 or self.alpha < 0.0:
            raise ValueError("beta, h, alpha must be >= 0")
        if self.steps < 2:
            raise ValueError(f"need steps >= 2, got {self.steps}")
        if self.threads < 1:
            raise ValueError(f"need threads >= 1, got {self.threads}")


def sample_stream(master_seed: int, index: int):
    """(recorded seed, generator) for one sample, mixed from (master, index)."""
    ss = np.random.SeedSequence(entropy=(int(master_seed), int(index)))
    seed_value = int(ss.generate_state(1, np.uint64)[0])
    return seed_value, np.random.Generator(np.random.PCG64(ss))


def _map_ordered(fn, indices, threads: int):
    # One BLAS thread per worker: the enumeration matmuls scale better
    # across samples than inside a single tall-skinny product.
    with threadpool_limits(limits=1):
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                return list(ex.map(fn, indices))
        return [fn(i) for i in indices]


def bootstrap_variance_ci(
    values: np.ndarray,
    master_seed: int,
    n_boot: int = 1000,
    level: float = 0.95,
) -> tuple[float, float]:
    """Percentile bootstrap CI for the sample variance (ddof=1)."""
    values = np.asarray(values, dtype=np.float64)
    _, rng = sample_stream(master_seed, 0xB007)
    idx = rng.integers(0, values.size, size=(n_boot, values.size))
    boot = values[idx].var(axis=1, ddof=1)
    lo = float(np.percentile(boot, 100.0 * (1.0 - level) / 2.0))
    hi = float(np.percentile(boot, 100.0 * (1.0 + level) / 2.0))
    return lo, hi


def ks_normal_distance(values: np.ndarray) -> float:
    """KS distance of standardized values against the standard normal.

    Returns nan for degenerate (zero-variance) samples.
    """
    values = np.asarray(values, dtype=np.float64)
    sd = values.std(ddof=1)
    if sd == 0.0 or not np.isfinite(sd):
        return float("nan")
    z = np.sort((values - values.mean()) / sd)
    cdf = ndtr(z)
    n = z.size
    up = np.arange(1, n + 1) / n - cdf
    down = cdf - np.arange(0, n) / n
    return float(max(up.max(), down.max()))


def ks_threshold(n_samples: int) -> float:
    """Reporting threshold: 1.5 x the asymptotic 5% critical distance."""
    return 1.5 * KS_CRIT_5PCT / math.sqrt(n_samples)


@dataclass(frozen=True)
class FluctuationRecord:
    """Per-disorder fluctuation samples plus summary statistics."""

    values: np.ndarray
    seeds: np.ndarray
    mean: float
    variance: float
    ci_lo: float
    ci_hi: float
    tau2: float
    ks_distance: float
    ks_threshold: float

    @property
    def stderr_mean(self) -> float:
        return float(self.values.std(ddof=1) / math.sqrt(self.values.size))


def _finalize(values: np.ndarray, seeds: np.ndarray, tau2: float, master_seed: int) -> FluctuationRecord:
    values = np.asarray(values, dtype=np.float64)
    lo, hi = bootstrap_variance_ci(values, master_seed)
    return FluctuationRecord(
        values=values,
        seeds=np.asarray(seeds, dtype=np.uint64),
        mean=float(values.mean()),
        variance=float(values.var(ddof=1)),
        ci_lo=lo,
        ci_hi=hi,
        tau2=tau2,
        ks_distance=ks_normal_distance(values),
        ks_threshold=ks_threshold(values.size),
    )


def sk_clt_center(beta: float, h: float) -> tuple[float, float, float, float]:
    """(q, nu2, tau2, center) with center = log 2 + beta^2 (1-q)^2/4 + E[Phi]."""
    q, nu2, tau2 = gaussian.sk_variances(beta, h)
    b = beta * math.sqrt(q)
    e_phi = gaussian._ladder(
        lambda rule: float(np.dot(rule.weights, gaussian.log_cosh(b * rule.nodes + h)))
    )
    center = math.log(2.0) + beta * beta * (1.0 - q) ** 2 / 4.0 + e_phi
    return q, nu2, tau2, center


def run_sk_clt(cfg: ExperimentConfig) -> FluctuationRecord:
    """Disorder CLT experiment for the SK free energy at t = 1."""
    if cfg.model != "sk":
        raise ValueError("config model must be 'sk'")
    if cfg.beta >= gaussian.beta0():
        warnings.warn(
            f"beta={cfg.beta} is not below beta0={gaussian.beta0():.4f}; "
            "the high-temperature limit theorem is out of range",
            stacklevel=2,
        )
    seeds = np.array([sample_stream(cfg.seed, s)[0] for s in range(cfg.n_disorder)], dtype=np.uint64)
    if cfg.beta == 0.0:
        # Z_N = (2 cosh h)^N for every draw: the pair term vanishes
        # identically and the centering cancels exactly.
        return _finalize(np.zeros(cfg.n_disorder), seeds, 0.0, cfg.seed)

    _, _, tau2, center = sk_clt_center(cfg.beta, cfg.h)
    sqrt_n = math.sqrt(cfg.n)
    params = gibbs.SkParams(beta=cfg.beta, h=cfg.h, n=cfg.n)
    n_pairs = cfg.n * (cfg.n - 1) // 2

    def one(s: int) -> float:
        _, rng = sample_stream(cfg.seed, s)
        dis = gibbs.SkDisorder(n=cfg.n, couplings=rng.standard_normal(n_pairs))
        log_z = gibbs.sk_log_partition(dis, params)
        return sqrt_n * (log_z / cfg.n - center)

    values = _map_ordered(one, range(cfg.n_disorder), cfg.threads)
    return _finalize(np.array(values), seeds, tau2, cfg.seed)


def run_overlap_concentration(
    n_list,
    beta: float,
    h: float,
    n_disorder: int,
    seed: int = 42,
    threads: int = 1,
) -> list[dict]:
    """N * E[rho((R - q)^2)] per system size, averaged over disorder draws.

    Boundedness of this sequence in N is the concentration property of the
    overlap around q in the high-temperature region.
    """
    q = gaussian.solve_q_sk(beta, h).q
    rows = []
    for n in n_list:
        params = gibbs.SkParams(beta=beta, h=h, n=n)
        n_pairs = n * (n - 1) // 2

        def one(s: int, n=n, params=params, n_pairs=n_pairs) -> float:
            ss = np.random.SeedSequence(entropy=(int(seed), int(n), int(s)))
            rng = np.random.Generator(np.random.PCG64(ss))
            dis = gibbs.SkDisorder(n=n, couplings=rng.standard_normal(n_pairs))
            return gibbs.overlap_moments_exact(dis, params, q)[2]

        vals = np.array(_map_ordered(one, range(n_disorder), threads))
        rows.append(
            {
                "n": n,
                "n_times_value": n * float(vals.mean()),
                "stderr": n * float(vals.std(ddof=1) / math.sqrt(n_disorder)),
            }
        )
    return rows


def run_perceptron_clt(cfg: ExperimentConfig) -> FluctuationRecord:
    """Disorder CLT experiment for the perceptron free energy at M = round(alpha N)."""
    if cfg.model != "perceptron":
        raise ValueError("config model must be 'perceptron'")
    m = int(round(cfg.alpha * cfg.n))
    if m < 1:
        raise ValueError(f"alpha={cfg.alpha} gives M={m}; need M >= 1")
    u = gibbs.tanh_u(cfg.u_scale)
    seeds = np.array([sample_stream(cfg.seed, s)[0] for s in range(cfg.n_disorder)], dtype=np.uint64)
    if u.bound == 0.0:
        # Z_{N,m} = 2^N exactly and Phi(m) = log 2 for every m.
        return _finalize(np.zeros(cfg.n_disorder), seeds, 0.0, cfg.seed)

    alpha_eff = m / cfg.n
    phi = gaussian.phi_m(cfg.n, m, u)
    tau2 = gaussian.tau2_perceptron(alpha_eff, u)
    sqrt_n = math.sqrt(cfg.n)

    def one(s: int) -> float:
        _, rng = sample_stream(cfg.seed, s)
        dis = gibbs.PerceptronDisorder(n=cfg.n, m=m, couplings=rng.standard_normal((cfg.n, m)))
        log_z = gibbs.perceptron_log_partition(dis, u, m)
        return sqrt_n * (log_z / cfg.n - phi)

    values = _map_ordered(one, range(cfg.n_disorder), cfg.threads)
    return _finalize(np.array(values), seeds, tau2, cfg.seed)


def telescoping_check(dis: gibbs.PerceptronDisorder, u: gibbs.BoundedU, m_max: int) -> float:
    """Max defect of the per-pattern telescoping identity up to m_max.

    Y_m = (1/N) log rho_{m-1}(exp(u(S_m))) - (Phi(m) - Phi(m-1)) must
    partial-sum to log(Z_{N,m})/N - Phi(m); the identity is algebraic, so
    the defect is float rounding only.
    """
    if not 1 <= m_max <= dis.m:
        raise ValueError(f"m_max={m_max} out of range for disorder with m={dis.m}")
    n = dis.n
    phis = [gaussian.phi_m(n, m, u) for m in range(m_max + 1)]
    log_zs = [gibbs.perceptron_log_partition(dis, u, m) for m in range(m_max + 1)]
    worst = 0.0
    partial = 0.0
    for m in range(1, m_max + 1):
        log_rho = log_zs[m] - log_zs[m - 1]
        partial += log_rho / n - (phis[m] - phis[m - 1])
        direct = log_zs[m] / n - phis[m]
        worst = max(worst, abs(partial - direct))
    return worst


def empirical_cf(values: np.ndarray, u_values, tau2: float) -> list[dict]:
    """Empirical characteristic function against the centered Gaussian target.

    Per u: (E[cos(uY)], E[sin(uY)]) and exp(-tau^2 u^2 / 2), plus the
    complex modulus of the difference.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("need at least one fluctuation sample")
    rows = []
    for uu in np.asarray(u_values, dtype=np.float64):
        re = float(np.mean(np.cos(uu * values)))
        im = float(np.mean(np.sin(uu * values)))
        target = math.exp(-0.5 * tau2 * uu * uu)
        rows.append(
            {
                "u": float(uu),
                "emp_re": re,
                "emp_im": im,
                "target": target,
                "abs_diff": math.hypot(re - target, im),
            }
        )
    return rows


def cf_check_grid(tau2: float, n_points: int = 11, span: float = 3.0) -> np.ndarray:
    """Equispaced u grid on [-span/tau, span/tau] for CF comparisons."""
    if tau2 <= 0.0:
        raise ValueError("tau2 must be positive to scale the CF grid")
    lim = span / math.sqrt(tau2)
    return np.linspace(-lim, lim, n_points)
