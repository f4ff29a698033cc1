import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from fluidclt.stats import (
    chi2_cdf,
    chi2_quantile,
    empirical_moments,
    ks_statistic,
    mahalanobis_check,
    pseudo_inverse,
)


def test_moments_constant():
    mean, cov = empirical_moments(np.tile([1.0, 2.0], (10, 1)))
    np.testing.assert_array_equal(mean, [1, 2])
    assert not cov.any()


def test_moments_two_samples():
    u = np.array([0.5, -2.0, 1.0])
    _, cov = empirical_moments(np.stack([u, -u]))
    np.testing.assert_allclose(cov, 2 * np.outer(u, u))


def test_moments_need_two():
    with pytest.raises(ValueError):
        empirical_moments(np.zeros((1, 3)))


def test_moments_standard_normal(rng):
    N = 10**5
    _, cov = empirical_moments(rng.standard_normal((N, 3)))
    assert np.abs(cov - np.eye(3)).max() <= 5 / math.sqrt(N)


def test_moments_two_pass_stable():
    x = 1e9 + np.array([[1.0], [2.0], [3.0]])
    _, cov = empirical_moments(x)
    assert cov[0, 0] == pytest.approx(1.0, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 40), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_moments_symmetric_psd(N, q, seed):
    x = np.random.default_rng(seed).normal(size=(N, q)) * 10
    _, cov = empirical_moments(x)
    assert np.array_equal(cov, cov.T)
    assert np.linalg.eigvalsh(cov).min() >= -1e-9 * max(1, np.abs(cov).max())


def test_chi2_quantile_dof4_against_closed_form():
    # chi-square with 4 dof has CDF 1 - e^{-x/2} (1 + x/2)
    mpmath.mp.dps = 30
    root = mpmath.findroot(lambda x: 1 - mpmath.exp(-x / 2) * (1 + x / 2) - mpmath.mpf("0.99"), 13)
    assert abs(chi2_quantile(0.99, 4) - float(root)) <= 1e-10
    assert round(chi2_quantile(0.99, 4), 4) == 13.2767


@pytest.mark.parametrize("dof", [1, 2, 3, 5, 10, 21])
def test_chi2_against_mpmath(dof):
    mpmath.mp.dps = 30
    for x in (0.5, 3.0, 12.0, 30.0):
        ref = mpmath.gammainc(dof / 2, 0, x / 2, regularized=True)
        assert abs(chi2_cdf(x, dof) - float(ref)) <= 1e-12
    for p in (0.01, 0.5, 0.99):
        assert chi2_cdf(chi2_quantile(p, dof), dof) == pytest.approx(p, abs=1e-12)


def test_pseudo_inverse_rank():
    v = np.array([1.0, -2.0, 1.0])
    inv, r = pseudo_inverse(np.outer(v, v))
    assert r == 1
    np.testing.assert_allclose(inv, np.outer(v, v) / 36, atol=1e-14)
    inv, r = pseudo_inverse(np.diag([2.0, 4.0]))
    assert r == 2
    np.testing.assert_allclose(inv, np.diag([0.5, 0.25]))


def test_mahalanobis_normal_sample(rng):
    S = np.array([[2.0, 0.3, 0.0], [0.3, 1.0, -0.2], [0.0, -0.2, 0.5]])
    W = rng.multivariate_normal(np.zeros(3), S, size=20000)
    res = mahalanobis_check(W, S)
    assert res.passed and res.rank == 3
    assert res.mean == pytest.approx(3, abs=0.1)
    assert res.exceed_fraction == pytest.approx(0.01, abs=0.004)


def test_mahalanobis_fixed_vector_fails():
    W = np.tile([1.0, 0.0, 0.0], (10000, 1))
    res = mahalanobis_check(W, np.eye(3))
    assert res.mean == pytest.approx(1.0)
    assert not res.passed


def test_mahalanobis_singular_uses_rank(rng):
    v = np.array([1.0, -2.0, 1.0]) / math.sqrt(6)
    W = rng.standard_normal((5000, 1)) * v
    res = mahalanobis_check(W, np.outer(v, v))
    assert res.rank == 1 and res.passed


def test_ks_matches_scipy_for_continuous_data(rng):
    x = rng.standard_normal(3000)
    assert ks_statistic(x) == pytest.approx(sps.kstest(x, "norm").statistic, abs=1e-12)


def test_ks_lattice_correction(rng):
    # binomial counts standardized: raw KS sees the lattice jumps, corrected does not
    n, p, N = 400, 0.3, 20000
    k = rng.binomial(n, p, size=N)
    sd = math.sqrt(n * p * (1 - p))
    x = (k - n * p) / sd
    raw = ks_statistic(x)
    fixed = ks_statistic(x, 1 / sd)
    assert raw > 1.63 / math.sqrt(N)
    assert fixed < 1.63 / math.sqrt(N)
