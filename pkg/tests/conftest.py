"""Shared test oracles: independent enumeration paths kept free of the
library's log-sum-exp and replica-factorization shortcuts."""

import itertools

import numpy as np
import pytest

import spinpath as sp


def enumerate_configs(n):
    """All 2^n configurations as rows, plain binary order, no caching."""
    return np.array(list(itertools.product((-1.0, 1.0), repeat=n)))


def direct_log_partition_sk(dis, params):
    """log Z by direct summation of exp(energies); no log-sum-exp.

    Energies are rebuilt from first principles: an explicit pair loop over
    the upper triangle, not the library's matrix product path.
    """
    configs = enumerate_configs(params.n)
    pair = np.zeros(configs.shape[0])
    pos = 0
    for i in range(params.n):
        for j in range(i + 1, params.n):
            pair += dis.couplings[pos] * configs[:, i] * configs[:, j]
            pos += 1
    energies = params.beta / np.sqrt(params.n) * pair + params.h * configs.sum(axis=1)
    return float(np.log(np.sum(np.exp(energies))))


def direct_log_partition_perceptron(dis, u, m):
    """log Z by direct summation over configurations and patterns."""
    configs = enumerate_configs(dis.n)
    energies = np.zeros(configs.shape[0])
    for k in range(m):
        energies += u.u(configs @ dis.couplings[:, k] / np.sqrt(dis.n))
    return float(np.log(np.sum(np.exp(energies))))


def double_replica_moments(dis, params):
    """rho(R), rho(R^2) by brute force over configuration pairs."""
    configs = enumerate_configs(params.n)
    energies = np.array([sp.sk_energy(row, dis, params) for row in configs])
    w = np.exp(energies - energies.max())
    w /= w.sum()
    r = (configs @ configs.T) / params.n
    joint = np.outer(w, w)
    return float(np.sum(joint * r)), float(np.sum(joint * r * r))


@pytest.fixture(scope="session")
def default_u():
    return sp.tanh_u(0.2)
