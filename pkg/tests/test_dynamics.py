import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import random_network
from spreadrisk.dynamics import (build_state_matrix, default_horizon, rollout, simulate_stochastic,
                                 step_linear, step_nonlinear)
from spreadrisk.scenarios import build_epidemic7


def test_state_matrix_entries():
    net = build_epidemic7()
    h = 0.24
    A = build_state_matrix(net, net.beta_hi, net.delta_lo, h).toarray()
    np.testing.assert_allclose(np.diag(A), 1 - h * net.delta_lo)
    for e in range(net.m):
        assert A[net.dst[e], net.src[e]] == pytest.approx(h * net.beta_hi[e])
    assert np.count_nonzero(A) == net.m + net.n


def test_rate_checks():
    net = build_epidemic7()
    with pytest.raises(ValueError):
        build_state_matrix(net, net.beta_hi * 10, net.delta_lo, 0.24)
    with pytest.raises(ValueError):
        step_nonlinear(np.full(net.n, 1.5), net, net.beta_hi, net.delta_lo, 0.24)


@given(seed=st.integers(0, 10_000), n=st.integers(1, 8))
def test_nonlinear_below_linear_and_in_unit_box(seed, n):
    rng = np.random.default_rng(seed)
    net, h = random_network(rng, n)
    x = rng.random(n)
    A = build_state_matrix(net, net.beta_hi, net.delta_lo, h)
    nl = step_nonlinear(x, net, net.beta_hi, net.delta_lo, h)
    lin = step_linear(x, A)
    assert np.all(nl >= -1e-15) and np.all(nl <= 1 + 1e-15)
    assert np.all(nl <= lin + 1e-12)


def test_rollout_shapes():
    net = build_epidemic7()
    rates = [(net.beta_hi, net.delta_lo)] * 2
    tr = rollout(net.x_hat, net, rates, 0.24, steps=5)
    assert tr.states.shape == (5, net.n)
    np.testing.assert_array_equal(tr.states[0], net.x_hat)
    assert "k" in tr.to_csv().splitlines()[0]


def test_default_horizon():
    assert 0.9 ** default_horizon(0.9) <= 1e-6 < 0.9 ** (default_horizon(0.9) - 1)
    with pytest.raises(ValueError):
        default_horizon(1.0)


def test_simulation_is_seeded_and_blockwise():
    net = build_epidemic7()
    a = simulate_stochastic(net, 0.24, 0.93, replications=1000, seed=3, T=50)
    b = simulate_stochastic(net, 0.24, 0.93, replications=1000, seed=3, T=50)
    c = simulate_stochastic(net, 0.24, 0.93, replications=600, seed=3, T=50)
    np.testing.assert_array_equal(a.costs, b.costs)
    # the first 512-block does not depend on the total count
    np.testing.assert_array_equal(a.costs[:512], c.costs[:512])
    assert a.ci95[0] < a.mean < a.ci95[1]
    with pytest.raises(ValueError):
        simulate_stochastic(net, 0.24, 0.93, replications=0)


def test_simulation_without_spreading_matches_closed_form():
    # no edges: node i stays infected for a geometric time, E cost = c x sum_k alpha^k (1-h d)^(k-1)
    from helpers import scalar_network

    net = scalar_network(c=1.0, delta_lo=0.5, x_hat=1.0)
    h, alpha, T = 0.5, 0.9, 200
    sim = simulate_stochastic(net, h, alpha, replications=20_000, seed=1, T=T)
    r = alpha * (1 - h * 0.5)
    exact = alpha * (1 - r ** T) / (1 - r)
    assert abs(sim.mean - exact) <= 4 * sim.stderr
