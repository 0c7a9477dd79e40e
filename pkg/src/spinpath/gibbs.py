"""Exact Gibbs computations for the SK and perceptron models at desk scale.

Everything here is enumeration-based: partition functions, single- and
two-site Gibbs averages, and overlap moments are computed by summing over
all 2^N spin configurations, in log space. The SK energy of a configuration
sigma in {-1,+1}^N with pair couplings g_{i,j} (i < j) and field h is

    (beta / sqrt(N)) * sum_{i<j} g_{i,j} sigma_i sigma_j + h * sum_i sigma_i

and the perceptron energy with an n x m coupling table is

    sum_{k<=m} u(S_k),   S_k = N^{-1/2} sum_i g_{i,k} sigma_i,

for a bounded activation u. Enumeration is capped (default N <= 24) and
streams over configurations in chunks, so memory stays flat. For the SK
model the sum exploits the exact pairing sigma <-> -sigma: the pair term is
even under a global flip and the field term odd, so only half of the
configurations are ever materialized.

Couplings are indexed (i, j) with i < j, 1-based in file headers and
documentation, 0-based internally.
"""

from __future__ import annotations

import functools
import threading
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

ENUM_CAP = 24
# Largest n whose half-space spin matrix is kept in memory (84 MB at n=20).
_CACHE_BITS = 20
_CHUNK_ROWS = 1 << 20

_cache_lock = threading.Lock()


def as_spins(x, n: int | None = None) -> np.ndarray:
    """Validate and return a spin configuration as a float array.

    Raises ValueError unless every entry is exactly -1 or +1 (and, if `n`
    is given, the length matches).
    """
    s = np.asarray(x, dtype=np.float64)
    if s.ndim != 1:
        raise ValueError(f"spin configuration must be 1-D, got shape {s.shape}")
    if n is not None and s.size != n:
        raise ValueError(f"expected {n} spins, got {s.size}")
    if not np.all(np.abs(s) == 1.0):
        raise ValueError("spin entries must be exactly -1 or +1")
    return s


def random_spins(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random configuration in {-1,+1}^n."""
    return np.where(rng.random(n) < 0.5, -1.0, 1.0)


@dataclass(frozen=True)
class SkParams:
    """SK model parameters: inverse temperature, external field, site count."""

    beta: float
    h: float
    n: int

    def __post_init__(self):
        if self.beta < 0.0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.h < 0.0:
            raise ValueError(f"h must be >= 0, got {self.h}")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")


@dataclass(frozen=True)
class SkDisorder:
    """Quenched SK couplings g_{i,j} for i < j, stored row-major upper-triangular."""

    n: int
    couplings: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.couplings, dtype=np.float64)
        want = self.n * (self.n - 1) // 2
        if c.shape != (want,):
            raise ValueError(
                f"need {want} couplings for n={self.n}, got shape {c.shape}"
            )
        object.__setattr__(self, "couplings", c)

    def matrix(self) -> np.ndarray:
        """Dense symmetric coupling matrix with zero diagonal."""
        g = np.zeros((self.n, self.n))
        iu = np.triu_indices(self.n, 1)
        g[iu] = self.couplings
        return g + g.T


@dataclass(frozen=True)
class PerceptronDisorder:
    """Quenched perceptron couplings g_{i,k}, one column per pattern."""

    n: int
    m: int
    couplings: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.couplings, dtype=np.float64)
        if c.shape != (self.n, self.m):
            raise ValueError(
                f"coupling table must be ({self.n}, {self.m}), got {c.shape}"
            )
        object.__setattr__(self, "couplings", c)


@dataclass(frozen=True)
class BoundedU:
    """Activation u with |u| <= bound, plus first and second derivatives.

    All three callables must be numpy-vectorized. `bound == 0` certifies
    u identically zero, which some experiment code uses as an exact
    degenerate fast path.
    """

    bound: float
    u: Callable[[np.ndarray], np.ndarray]
    du: Callable[[np.ndarray], np.ndarray]
    d2u: Callable[[np.ndarray], np.ndarray]


def tanh_u(scale: float = 0.2) -> BoundedU:
    """Default bounded activation u(x) = scale * tanh(x).

    All derivatives are globally bounded, so the small-alpha assumptions of
    the perceptron analysis hold by construction. scale = 0 gives u == 0.
    """
    a = float(scale)
    if a == 0.0:
        z = lambda x: np.zeros_like(np.asarray(x, dtype=np.float64))
        return BoundedU(bound=0.0, u=z, du=z, d2u=z)
    return BoundedU(
        bound=abs(a),
        u=lambda x: a * np.tanh(x),
        du=lambda x: a * (1.0 - np.tanh(x) ** 2),
        d2u=lambda x: -2.0 * a * np.tanh(x) * (1.0 - np.tanh(x) ** 2),
    )


def const_u(c: float) -> BoundedU:
    """Constant activation u(x) = c (derivatives vanish)."""
    c = float(c)
    z = lambda x: np.zeros_like(np.asarray(x, dtype=np.float64))
    return BoundedU(bound=abs(c), u=lambda x: np.full_like(np.asarray(x, dtype=np.float64), c), du=z, d2u=z)


def linear_u(a: float) -> BoundedU:
    """Unbounded test activation u(x) = a*x; only for closed-form checks."""
    a = float(a)
    return BoundedU(
        bound=np.inf,
        u=lambda x: a * np.asarray(x, dtype=np.float64),
        du=lambda x: np.full_like(np.asarray(x, dtype=np.float64), a),
        d2u=lambda x: np.zeros_like(np.asarray(x, dtype=np.float64)),
    )


def sample_sk_disorder(n: int, rng: np.random.Generator) -> SkDisorder:
    """i.i.d. standard normal couplings for the upper triangle."""
    return SkDisorder(n=n, couplings=rng.standard_normal(n * (n - 1) // 2))


def sample_perceptron_disorder(n: int, m: int, rng: np.random.Generator) -> PerceptronDisorder:
    """i.i.d. standard normal n x m coupling table."""
    return PerceptronDisorder(n=n, m=m, couplings=rng.standard_normal((n, m)))


# ---------------------------------------------------------------------------
# configuration enumeration


def _require_cap(n: int, cap: int = ENUM_CAP) -> None:
    if n > cap:
        raise ValueError(f"n={n} exceeds the enumeration cap {cap}")


def _bits_to_spins(start: int, rows: int, n: int) -> np.ndarray:
    """Rows `start .. start+rows` of the 2^n spin table (bit i -> site i)."""
    idx = np.arange(start, start + rows, dtype=np.uint64)
    out = np.empty((rows, n))
    for i in range(n):
        out[:, i] = ((idx >> np.uint64(i)) & np.uint64(1)).astype(np.float64)
    out *= 2.0
    out -= 1.0
    return out


@functools.lru_cache(maxsize=4)
def _full_spin_matrix(n: int) -> np.ndarray:
    """All 2^n configurations as a read-only (2^n, n) matrix. Cached for n <= 16."""
    if n > 16:
        raise ValueError(f"full spin matrix only materialized for n <= 16, got {n}")
    s = _bits_to_spins(0, 1 << n, n)
    s.setflags(write=False)
    return s


@functools.lru_cache(maxsize=2)
def _half_spin_matrix(n: int) -> np.ndarray:
    """Configurations with the last spin fixed to +1, read-only (2^(n-1), n)."""
    rows = 1 << (n - 1)
    s = np.empty((rows, n))
    s[:, : n - 1] = _bits_to_spins(0, rows, n - 1) if n > 1 else 0.0
    s[:, n - 1] = 1.0
    s.setflags(write=False)
    return s


@functools.lru_cache(maxsize=2)
def _half_field_sums(n: int) -> np.ndarray:
    s = _half_spin_matrix(n).sum(axis=1)
    s.setflags(write=False)
    return s


def _iter_half_spins(n: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """(spin chunk, row sums) over the half space (last spin +1), cached when small."""
    if n <= _CACHE_BITS:
        with _cache_lock:
            s = _half_spin_matrix(n)
            sums = _half_field_sums(n)
        yield s, sums
        return
    rows = 1 << (n - 1)
    for start in range(0, rows, _CHUNK_ROWS):
        m = min(_CHUNK_ROWS, rows - start)
        chunk = np.empty((m, n))
        chunk[:, : n - 1] = _bits_to_spins(start, m, n - 1)
        chunk[:, n - 1] = 1.0
        yield chunk, chunk.sum(axis=1)


def _pair_columns(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Upper-triangle index pair arrays in row-major (i, j), i < j order."""
    iu = np.triu_indices(n, 1)
    return iu[0], iu[1]


@functools.lru_cache(maxsize=4)
def _pair_products(n: int) -> np.ndarray:
    """sigma_i * sigma_j for every configuration and pair, (2^n, n(n-1)/2)."""
    s = _full_spin_matrix(n)
    ii, jj = _pair_columns(n)
    p = s[:, ii] * s[:, jj]
    p.setflags(write=False)
    return p


def sk_energy(sigma, dis: SkDisorder, p: SkParams) -> float:
    """Energy -H(sigma): pair term plus field term."""
    s = as_spins(sigma, p.n)
    if dis.n != p.n:
        raise ValueError(f"disorder has n={dis.n}, params have n={p.n}")
    ii, jj = _pair_columns(p.n)
    pair = float(np.dot(dis.couplings, s[ii] * s[jj]))
    return p.beta / np.sqrt(p.n) * pair + p.h * float(s.sum())


def overlap(s1, s2) -> float:
    """Normalized replica overlap (1/N) sum_i sigma^1_i sigma^2_i."""
    a = as_spins(s1)
    b = as_spins(s2)
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    return float(np.mean(a * b))


_workspace = threading.local()


def _matmul_buffer(shape: tuple[int, int]) -> np.ndarray:
    """Per-thread scratch for the big spin-by-coupling product."""
    store = getattr(_workspace, "buffers", None)
    if store is None:
        store = _workspace.buffers = {}
    buf = store.get(shape)
    if buf is None:
        buf = store[shape] = np.empty(shape)
    return buf


def _sk_half_energy_parts(spins_half: np.ndarray, row_sums: np.ndarray, g: np.ndarray, p: SkParams):
    """Even pair part and odd field part of the energy on the half space."""
    t = np.matmul(spins_half, g, out=_matmul_buffer(spins_half.shape))
    np.multiply(t, spins_half, out=t)
    pair = t.sum(axis=1)
    pair *= 0.5 * p.beta / np.sqrt(p.n)
    return pair, row_sums * p.h


def sk_log_partition(dis: SkDisorder, p: SkParams, cap: int = ENUM_CAP) -> float:
    """log Z by streaming log-sum-exp over all 2^n configurations."""
    _require_cap(p.n, cap)
    if dis.n != p.n:
        raise ValueError(f"disorder has n={dis.n}, params have n={p.n}")
    g = dis.matrix()
    running_max = -np.inf
    running_sum = 0.0
    for s, sums in _iter_half_spins(p.n):
        pair, odd = _sk_half_energy_parts(s, sums, g, p)
        for e in (pair + odd, pair - odd):
            m = float(e.max())
            if m > running_max:
                running_sum *= np.exp(running_max - m)
                running_max = m
            running_sum += float(np.exp(e - running_max).sum())
    return running_max + np.log(running_sum)


def sk_partition_exact(dis: SkDisorder, p: SkParams, cap: int = ENUM_CAP) -> tuple[float, float]:
    """(log Z, Z) with Z recovered from the log-safe accumulation."""
    log_z = sk_log_partition(dis, p, cap=cap)
    return log_z, float(np.exp(log_z))


def gibbs_single_site_expectations(dis: SkDisorder, p: SkParams, cap: int = ENUM_CAP):
    """Exact Gibbs tables (<sigma_i>, <sigma_i sigma_j>) for all sites.

    Returns a pair (m, c): m has shape (n,), c is the symmetric (n, n)
    matrix of two-site averages with unit diagonal.
    """
    _require_cap(p.n, cap)
    if dis.n != p.n:
        raise ValueError(f"disorder has n={dis.n}, params have n={p.n}")
    g = dis.matrix()
    log_z = sk_log_partition(dis, p, cap=cap)
    m = np.zeros(p.n)
    c = np.zeros((p.n, p.n))
    for s, sums in _iter_half_spins(p.n):
        pair, odd = _sk_half_energy_parts(s, sums, g, p)
        w_plus = np.exp(pair + odd - log_z)
        w_minus = np.exp(pair - odd - log_z)
        m += (w_plus - w_minus) @ s
        c += (s * (w_plus + w_minus)[:, None]).T @ s
    return m, c


def overlap_moments_exact(dis: SkDisorder, p: SkParams, q: float, cap: int = ENUM_CAP):
    """(rho(R), rho(R^2), rho((R - q)^2)) via single-replica factorization.

    Replicas are independent under the product Gibbs measure, so
    rho(R) = (1/N) sum_i <sigma_i>^2 and
    rho(R^2) = (1/N^2) sum_{i,j} <sigma_i sigma_j>^2.
    """
    m, c = gibbs_single_site_expectations(dis, p, cap=cap)
    n = p.n
    rho_r = float(np.dot(m, m)) / n
    rho_r2 = float(np.sum(c * c)) / (n * n)
    rho_centered = rho_r2 - 2.0 * q * rho_r + q * q
    return rho_r, rho_r2, rho_centered


# ---------------------------------------------------------------------------
# perceptron


def perceptron_sk_overlap_fields(sigma, dis: PerceptronDisorder, k: int) -> float:
    """Normalized projection S_k = N^{-1/2} sum_i g_{i,k} sigma_i (k 0-based)."""
    s = as_spins(sigma, dis.n)
    if not 0 <= k < dis.m:
        raise ValueError(f"pattern index {k} out of range for m={dis.m}")
    return float(np.dot(dis.couplings[:, k], s)) / np.sqrt(dis.n)


def perceptron_energies(dis: PerceptronDisorder, u: BoundedU, m: int, cap: int = ENUM_CAP) -> np.ndarray:
    """Energy sum_{k<m} u(S_k(sigma)) for every configuration, (2^n,)."""
    _require_cap(dis.n, min(cap, 16))
    if not 0 <= m <= dis.m:
        raise ValueError(f"pattern count {m} out of range for table with m={dis.m}")
    s = _full_spin_matrix(dis.n)
    if m == 0:
        return np.zeros(s.shape[0])
    fields = s @ dis.couplings[:, :m]
    fields /= np.sqrt(dis.n)
    return u.u(fields).sum(axis=1)


def perceptron_log_partition(dis: PerceptronDisorder, u: BoundedU, m: int, cap: int = ENUM_CAP) -> float:
    """log Z_{N,m} by log-sum-exp over 2^n configurations (counting measure)."""
    e = perceptron_energies(dis, u, m, cap=cap)
    mx = float(e.max())
    return mx + float(np.log(np.exp(e - mx).sum()))


def perceptron_partition_exact(dis: PerceptronDisorder, u: BoundedU, m: int, cap: int = ENUM_CAP) -> float:
    """Alias of perceptron_log_partition; the log value is the contract."""
    return perceptron_log_partition(dis, u, m, cap=cap)


# ---------------------------------------------------------------------------
# disorder serialization (CSV is the canonical interchange; 1-based indices)


def save_sk_disorder(dis: SkDisorder, path) -> None:
    ii, jj = _pair_columns(dis.n)
    with open(path, "w", newline="\n") as f:
        f.write("i,j,g\n")
        for i, j, g in zip(ii, jj, dis.couplings):
            f.write(f"{i + 1},{j + 1},{g:.17g}\n")


def load_sk_disorder(path) -> SkDisorder:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if rows.shape[1] != 3:
        raise ValueError(f"expected 3 columns (i,j,g) in {path}")
    n = int(rows[:, 1].max())
    want = n * (n - 1) // 2
    if rows.shape[0] != want:
        raise ValueError(f"expected {want} couplings for n={n}, got {rows.shape[0]}")
    c = np.zeros(want)
    ii, jj = _pair_columns(n)
    pos = {(a, b): k for k, (a, b) in enumerate(zip(ii, jj))}
    for i, j, g in rows:
        c[pos[(int(i) - 1, int(j) - 1)]] = g
    return SkDisorder(n=n, couplings=c)


def save_perceptron_disorder(dis: PerceptronDisorder, path) -> None:
    with open(path, "w", newline="\n") as f:
        f.write("i,k,g\n")
        for i in range(dis.n):
            for k in range(dis.m):
                f.write(f"{i + 1},{k + 1},{dis.couplings[i, k]:.17g}\n")


def load_perceptron_disorder(path) -> PerceptronDisorder:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if rows.shape[1] != 3:
        raise ValueError(f"expected 3 columns (i,k,g) in {path}")
    n = int(rows[:, 0].max())
    m = int(rows[:, 1].max())
    c = np.zeros((n, m))
    for i, k, g in rows:
        c[int(i) - 1, int(k) - 1] = g
    return PerceptronDisorder(n=n, m=m, couplings=c)
