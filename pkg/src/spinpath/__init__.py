"""Desk-scale numerics for SK and perceptron spin glasses.

Exact enumeration-based Gibbs computations, replica-symmetric fixed points
and fluctuation constants, reversed-time Brownian interpolation paths, and
disorder-level Monte Carlo experiments for the free-energy limit theorems.
"""

from . import experiments, paths
from .gibbs import (
    ENUM_CAP,
    BoundedU,
    PerceptronDisorder,
    SkDisorder,
    SkParams,
    as_spins,
    const_u,
    gibbs_single_site_expectations,
    linear_u,
    overlap,
    overlap_moments_exact,
    perceptron_log_partition,
    perceptron_partition_exact,
    perceptron_sk_overlap_fields,
    random_spins,
    sample_perceptron_disorder,
    sample_sk_disorder,
    sk_energy,
    sk_log_partition,
    sk_partition_exact,
    tanh_u,
)
from .gaussian import (
    NonConvergenceError,
    PerceptronFixedPoint,
    QuadratureRule,
    SkFixedPoint,
    XiStatistics,
    beta0,
    beta0_equation,
    delta_phi_residual,
    gauss_hermite_rule,
    gh_expect,
    ibp_residual,
    log_cosh,
    phi_m,
    psi_eval,
    sk_variances,
    solve_perceptron_fp,
    solve_q_sk,
    tau2_perceptron,
    xi_moments,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
