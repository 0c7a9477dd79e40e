import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import spinpath as sp
from conftest import (
    direct_log_partition_perceptron,
    direct_log_partition_sk,
    double_replica_moments,
    enumerate_configs,
)


def sk_disorder(n, seed):
    return sp.sample_sk_disorder(n, np.random.default_rng(seed))


class TestSkEnergy:
    def test_zero_couplings_zero_field(self):
        dis = sp.SkDisorder(n=3, couplings=np.zeros(3))
        p = sp.SkParams(beta=1.0, h=0.0, n=3)
        assert sp.sk_energy([1, -1, 1], dis, p) == 0.0

    def test_two_site_hand_value(self):
        dis = sp.SkDisorder(n=2, couplings=np.array([1.0]))
        p = sp.SkParams(beta=1.0, h=0.0, n=2)
        assert sp.sk_energy([1, 1], dis, p) == pytest.approx(1.0 / math.sqrt(2.0), abs=1e-15)

    def test_field_only(self):
        dis = sp.SkDisorder(n=1, couplings=np.zeros(0))
        p = sp.SkParams(beta=1.0, h=0.3, n=1)
        assert sp.sk_energy([-1], dis, p) == pytest.approx(-0.3, abs=1e-15)

    def test_dimension_mismatch(self):
        dis = sp.SkDisorder(n=3, couplings=np.zeros(3))
        p = sp.SkParams(beta=1.0, h=0.0, n=3)
        with pytest.raises(ValueError):
            sp.sk_energy([1, -1], dis, p)
        with pytest.raises(ValueError):
            sp.sk_energy([1, -1, 2], dis, p)


class TestOverlap:
    def test_identical(self):
        s = [1, -1, 1, 1]
        assert sp.overlap(s, s) == 1.0

    def test_flipped(self):
        s = np.array([1.0, -1.0, 1.0])
        assert sp.overlap(s, -s) == -1.0

    def test_half_agreement(self):
        assert sp.overlap([1, 1, -1, -1], [1, -1, 1, -1]) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            sp.overlap([1, 1], [1, 1, 1])

    @given(st.lists(st.sampled_from([-1, 1]), min_size=1, max_size=30), st.data())
    @settings(max_examples=50, deadline=None)
    def test_symmetry_and_bounds(self, s1, data):
        s2 = data.draw(st.lists(st.sampled_from([-1, 1]), min_size=len(s1), max_size=len(s1)))
        v = sp.overlap(s1, s2)
        assert v == sp.overlap(s2, s1)
        assert -1.0 <= v <= 1.0
        assert sp.overlap(s1, s1) == 1.0


class TestSkPartition:
    def test_free_spins(self):
        n = 6
        dis = sp.SkDisorder(n=n, couplings=np.zeros(n * (n - 1) // 2))
        log_z, z = sp.sk_partition_exact(dis, sp.SkParams(beta=0.0, h=0.0, n=n))
        assert log_z == pytest.approx(n * math.log(2.0), abs=1e-12)
        assert z == pytest.approx(2.0**n, rel=1e-12)

    def test_single_spin(self):
        dis = sp.SkDisorder(n=1, couplings=np.zeros(0))
        for h in (0.0, 0.3, 1.7):
            log_z, _ = sp.sk_partition_exact(dis, sp.SkParams(beta=1.0, h=h, n=1))
            assert log_z == pytest.approx(math.log(2.0 * math.cosh(h)), abs=1e-13)

    def test_matches_direct_summation(self):
        p = sp.SkParams(beta=0.05, h=0.3, n=10)
        dis = sk_disorder(10, seed=2024)
        assert sp.sk_log_partition(dis, p) == pytest.approx(
            direct_log_partition_sk(dis, p), abs=1e-10
        )

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_direct_summation_random_draws(self, seed):
        p = sp.SkParams(beta=0.2, h=0.5, n=7)
        dis = sk_disorder(7, seed=seed)
        assert sp.sk_log_partition(dis, p) == pytest.approx(
            direct_log_partition_sk(dis, p), abs=1e-10
        )

    def test_flip_invariance_at_zero_field(self):
        """At h = 0 a global flip inside the enumeration leaves log Z fixed."""
        p = sp.SkParams(beta=0.3, h=0.0, n=8)
        dis = sk_disorder(8, seed=5)
        flipped = 0.0
        for row in enumerate_configs(8):
            flipped += np.exp(sp.sk_energy(-row, dis, p))
        assert sp.sk_log_partition(dis, p) == pytest.approx(np.log(flipped), abs=1e-12)

    def test_cap_enforced(self):
        dis = sp.SkDisorder(n=4, couplings=np.zeros(6))
        with pytest.raises(ValueError, match="cap"):
            sp.sk_log_partition(dis, sp.SkParams(beta=0.1, h=0.0, n=4), cap=3)

    def test_streaming_path_above_cache_size(self):
        """n = 21 exercises the chunked enumeration; beta = 0 has a closed form."""
        n, h = 21, 0.3
        dis = sp.SkDisorder(n=n, couplings=np.zeros(n * (n - 1) // 2))
        log_z = sp.sk_log_partition(dis, sp.SkParams(beta=0.0, h=h, n=n))
        assert log_z == pytest.approx(n * np.log(2.0 * np.cosh(h)), abs=1e-11)


class TestGibbsTables:
    def test_decoupled_means(self):
        n, h = 5, 0.3
        dis = sk_disorder(n, seed=9)
        m, c = sp.gibbs_single_site_expectations(dis, sp.SkParams(beta=0.0, h=h, n=n))
        assert np.allclose(m, math.tanh(h), atol=1e-13)
        off = c[~np.eye(n, dtype=bool)]
        assert np.allclose(off, math.tanh(h) ** 2, atol=1e-13)
        assert np.allclose(np.diag(c), 1.0, atol=1e-14)

    def test_zero_field_symmetry(self):
        dis = sk_disorder(6, seed=12)
        m, _ = sp.gibbs_single_site_expectations(dis, sp.SkParams(beta=0.4, h=0.0, n=6))
        assert np.allclose(m, 0.0, atol=1e-12)


class TestOverlapMoments:
    def test_free_case_r2(self):
        n = 6
        dis = sp.SkDisorder(n=n, couplings=np.zeros(n * (n - 1) // 2))
        p = sp.SkParams(beta=0.0, h=0.0, n=n)
        rho_r, rho_r2, cent = sp.overlap_moments_exact(dis, p, q=0.0)
        assert rho_r == pytest.approx(0.0, abs=1e-14)
        assert rho_r2 == pytest.approx(1.0 / n, abs=1e-13)
        assert cent == rho_r2

    def test_q_zero_reduces_to_second_moment(self):
        dis = sk_disorder(5, seed=3)
        p = sp.SkParams(beta=0.2, h=0.1, n=5)
        _, rho_r2, cent = sp.overlap_moments_exact(dis, p, q=0.0)
        assert cent == rho_r2

    @pytest.mark.parametrize("n,seed", [(4, 0), (6, 1), (8, 2)])
    def test_matches_double_replica_enumeration(self, n, seed):
        dis = sk_disorder(n, seed=seed)
        p = sp.SkParams(beta=0.15, h=0.3, n=n)
        rho_r, rho_r2, _ = sp.overlap_moments_exact(dis, p, q=0.0)
        oracle_r, oracle_r2 = double_replica_moments(dis, p)
        assert rho_r == pytest.approx(oracle_r, abs=1e-12)
        assert rho_r2 == pytest.approx(oracle_r2, abs=1e-12)

    @pytest.mark.parametrize("n", [4, 8, 12])
    def test_pair_sum_identity(self, n):
        """sum_{i<j} <s_i s_j>^2 = (N^2/2)(rho(R^2) - 1/N), sum_i <s_i>^2 = N rho(R)."""
        dis = sk_disorder(n, seed=n)
        p = sp.SkParams(beta=0.1, h=0.25, n=n)
        m, c = sp.gibbs_single_site_expectations(dis, p)
        rho_r, rho_r2, _ = sp.overlap_moments_exact(dis, p, q=0.0)
        iu = np.triu_indices(n, 1)
        assert np.sum(c[iu] ** 2) == pytest.approx(n * n / 2 * (rho_r2 - 1.0 / n), abs=1e-12)
        assert np.sum(m * m) == pytest.approx(n * rho_r, abs=1e-12)


class TestPerceptron:
    def test_field_zero_couplings(self):
        dis = sp.PerceptronDisorder(n=4, m=2, couplings=np.zeros((4, 2)))
        assert sp.perceptron_sk_overlap_fields([1, -1, 1, -1], dis, 0) == 0.0

    def test_field_single_site(self):
        dis = sp.PerceptronDisorder(n=1, m=1, couplings=np.ones((1, 1)))
        assert sp.perceptron_sk_overlap_fields([1], dis, 0) == pytest.approx(1.0, abs=1e-15)

    def test_field_cancellation(self):
        dis = sp.PerceptronDisorder(n=4, m=1, couplings=np.ones((4, 1)))
        assert sp.perceptron_sk_overlap_fields([1, 1, -1, -1], dis, 0) == 0.0

    def test_field_index_out_of_range(self):
        dis = sp.PerceptronDisorder(n=2, m=1, couplings=np.zeros((2, 1)))
        with pytest.raises(ValueError):
            sp.perceptron_sk_overlap_fields([1, 1], dis, 1)

    def test_partition_u_zero(self, default_u):
        dis = sp.sample_perceptron_disorder(6, 3, np.random.default_rng(0))
        assert sp.perceptron_log_partition(dis, sp.tanh_u(0.0), 3) == pytest.approx(
            6 * math.log(2.0), abs=1e-13
        )
        assert sp.perceptron_log_partition(dis, default_u, 0) == pytest.approx(
            6 * math.log(2.0), abs=1e-13
        )

    def test_partition_matches_direct_summation(self, default_u):
        dis = sp.sample_perceptron_disorder(8, 2, np.random.default_rng(77))
        assert sp.perceptron_log_partition(dis, default_u, 2) == pytest.approx(
            direct_log_partition_perceptron(dis, default_u, 2), abs=1e-10
        )


class TestBoundedU:
    @given(st.floats(min_value=-30.0, max_value=30.0, allow_nan=False))
    @settings(max_examples=100, deadline=None)
    def test_default_u_bounded(self, x):
        u = sp.tanh_u(0.2)
        assert abs(u.u(x)) <= u.bound + 1e-15

    def test_derivatives_finite_difference(self, default_u):
        xs = np.linspace(-3.0, 3.0, 13)
        eps = 1e-6
        du_fd = (default_u.u(xs + eps) - default_u.u(xs - eps)) / (2 * eps)
        d2u_fd = (default_u.du(xs + eps) - default_u.du(xs - eps)) / (2 * eps)
        assert np.allclose(default_u.du(xs), du_fd, atol=1e-9)
        assert np.allclose(default_u.d2u(xs), d2u_fd, atol=1e-9)

    def test_zero_scale_certifies_zero(self):
        u = sp.tanh_u(0.0)
        assert u.bound == 0.0
        assert np.all(u.u(np.linspace(-5, 5, 7)) == 0.0)


class TestSerialization:
    def test_sk_roundtrip(self, tmp_path):
        dis = sp.sample_sk_disorder(6, np.random.default_rng(11))
        path = tmp_path / "sk.csv"
        sp.gibbs.save_sk_disorder(dis, path)
        assert path.read_text().splitlines()[0] == "i,j,g"
        back = sp.gibbs.load_sk_disorder(path)
        assert back.n == dis.n
        assert np.array_equal(back.couplings, dis.couplings)

    def test_perceptron_roundtrip(self, tmp_path):
        dis = sp.sample_perceptron_disorder(5, 3, np.random.default_rng(13))
        path = tmp_path / "perc.csv"
        sp.gibbs.save_perceptron_disorder(dis, path)
        assert path.read_text().splitlines()[0] == "i,k,g"
        back = sp.gibbs.load_perceptron_disorder(path)
        assert np.array_equal(back.couplings, dis.couplings)


class TestValidation:
    def test_params_ranges(self):
        with pytest.raises(ValueError):
            sp.SkParams(beta=-0.1, h=0.0, n=2)
        with pytest.raises(ValueError):
            sp.SkParams(beta=0.1, h=0.0, n=0)

    def test_disorder_shape(self):
        with pytest.raises(ValueError):
            sp.SkDisorder(n=4, couplings=np.zeros(5))
        with pytest.raises(ValueError):
            sp.PerceptronDisorder(n=3, m=2, couplings=np.zeros((2, 3)))

    def test_spin_validation(self):
        with pytest.raises(ValueError):
            sp.as_spins([1.0, 0.5])
        with pytest.raises(ValueError):
            sp.as_spins([[1.0], [-1.0]])
