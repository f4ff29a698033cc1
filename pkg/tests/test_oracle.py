"""Analytic drift and second moments against brute-force enumeration."""

import numpy as np
import pytest

from fluidclt.core import exact_one_step_moments
from fluidclt.models import (
    dprocess_diffusion,
    dprocess_diffusion_pair_law,
    dprocess_drift,
    mindeg_diffusion,
    mindeg_drift,
    mindeg_exact_law,
)
from fluidclt.models import oracle


def _check_dprocess(n, d):
    states = oracle.dprocess_reachable(n, d)
    assert states
    for G in states:
        dist = oracle.dprocess_step_distribution(G, d)
        assert abs(dist.probs.sum() - 1) <= 1e-12
        # every increment is the sum of two unit degree shifts
        for dx in dist.deltas:
            assert dx.sum() == 0 and np.abs(dx).sum() in (2, 4)
        mean, second = exact_one_step_moments(dist)
        cov = second - np.outer(mean, mean)
        assert np.linalg.eigvalsh(cov).min() >= -1e-10
        p, pi = oracle.dprocess_pair_law(G, d)
        z_eff = np.append(p, 0.0)
        assert np.abs(dprocess_drift(z_eff, d, 0.0) - mean).max() <= 1e-12
        assert np.abs(dprocess_diffusion_pair_law(p, pi, d) - second).max() <= 1e-12
        # at the actual scaled state the drift is off by a finite-size term that
        # scales with the number of vertices still below degree d
        z = oracle.degree_counts(G, d) / n
        avail = n * (1 - z[d])
        assert np.abs(dprocess_drift(z, d, 0.0) - mean).max() <= 4 / avail + 1e-12


@pytest.mark.parametrize("n", range(2, 13))
def test_dprocess_d2(n):
    _check_dprocess(n, 2)


@pytest.mark.parametrize("n", range(2, 10))
def test_dprocess_d3(n):
    _check_dprocess(n, 3)


@pytest.mark.slow
def test_dprocess_d3_n10():
    _check_dprocess(10, 3)


@pytest.mark.parametrize("n", range(2, 13))
@pytest.mark.parametrize("q", [3, 6])
def test_mindeg(n, q):
    for sizes in oracle.mindeg_reachable(n):
        G = oracle.mindeg_forest(sizes)
        assert oracle.sizes_of(G) == sizes
        dist = oracle.mindeg_step_distribution(G, q)
        assert abs(dist.probs.sum() - 1) <= 1e-12
        mean, second = exact_one_step_moments(dist)
        p = mindeg_exact_law(oracle.order_counts(G, q), n)
        z_eff = p[:q] / np.arange(1, q + 1)
        assert np.abs(mindeg_drift(z_eff) - mean).max() <= 1e-12
        assert np.abs(mindeg_diffusion(z_eff) - second).max() <= 1e-12
        # without the tail term the (1,1) entry misses P[V > q]
        miss = mindeg_diffusion(z_eff) - mindeg_diffusion(z_eff, tail=False)
        assert miss[0, 0] == pytest.approx(p[q], abs=1e-12)


def test_uncorrected_dprocess_diffusion_at_empty_graph():
    G = oracle.nx.empty_graph(6)
    _, second = exact_one_step_moments(oracle.dprocess_step_distribution(G, 2))
    assert second[0, 0] == 4
    assert dprocess_diffusion([1, 0, 0], 2, corrected=False)[0, 0] == pytest.approx(1)


def test_reachable_counts():
    assert len(oracle.dprocess_reachable(8, 2)) == 39
    assert len(oracle.mindeg_reachable(8)) == 15
    assert oracle.mindeg_reachable(2) == [(1, 1)]


def test_terminal_state_has_no_law():
    G = oracle.nx.complete_graph(3)
    with pytest.raises(ValueError):
        oracle.dprocess_step_distribution(G, 2)
    with pytest.raises(ValueError):
        oracle.mindeg_step_distribution(oracle.mindeg_forest((2, 3)), 3)
