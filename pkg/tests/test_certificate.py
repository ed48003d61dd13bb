import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import random_network
from spreadrisk.certificate import (UnstableError, backward_certificate, risk_report,
                                    spectral_radius_bound, tightest_stationary_certificate,
                                    verify_certificate)
from spreadrisk.dynamics import build_state_matrix
from spreadrisk.scenarios import build_epidemic7


@given(seed=st.integers(0, 10_000), n=st.integers(1, 9))
def test_stationary_certificate_solves_the_fixed_point(seed, n):
    rng = np.random.default_rng(seed)
    net, h = random_network(rng, n)
    A = build_state_matrix(net, net.beta_lo, net.delta_hi, h)
    alpha = float(rng.uniform(0.3, 0.95))
    rho = max(abs(np.linalg.eigvals(alpha * A.toarray())))
    if rho >= 1 - 1e-9:
        with pytest.raises(UnstableError):
            tightest_stationary_certificate(A, net.cost, alpha)
        return
    p = tightest_stationary_certificate(A, net.cost, alpha)
    dense = np.linalg.solve((np.eye(n) - alpha * A.toarray()).T, net.cost)
    np.testing.assert_allclose(p, dense, rtol=1e-9, atol=1e-12)
    assert verify_certificate(p[None], [A], net.cost, alpha).valid


@given(seed=st.integers(0, 10_000), n=st.integers(1, 9))
def test_spectral_bracket_contains_radius(seed, n):
    rng = np.random.default_rng(seed)
    A = rng.random((n, n)) * (rng.random((n, n)) < 0.5) + np.diag(rng.random(n))
    lo, hi = spectral_radius_bound(A)
    rho = max(abs(np.linalg.eigvals(A)))
    assert lo <= rho * (1 + 1e-9) + 1e-12
    assert rho <= hi * (1 + 1e-9) + 1e-12


def test_unstable_epidemic_has_no_certificate():
    net = build_epidemic7()
    A = build_state_matrix(net, net.beta_hi, net.delta_lo, 0.24)
    with pytest.raises(UnstableError):
        tightest_stationary_certificate(A, net.cost, 0.93)


def test_backward_recursion_and_verification():
    net = build_epidemic7()
    A1 = build_state_matrix(net, net.beta_lo, net.delta_hi, 0.24)
    mats = [A1, A1, A1]
    p = backward_certificate(mats, net.cost, 0.93)
    assert verify_certificate(p, mats, net.cost, 0.93).valid
    np.testing.assert_allclose(p[0], p[2])  # same matrices: stationary throughout
    bad = p.copy()
    bad[1, 3] *= 0.99
    chk = verify_certificate(bad, mats, net.cost, 0.93)
    assert not chk.valid and chk.violation == (2, 4)
    neg = p.copy()
    neg[0, 0] = -1.0
    assert not verify_certificate(neg, mats, net.cost, 0.93).valid


def test_zero_cost_certificate_is_zero():
    net = build_epidemic7(cost=[0.0] * 7)
    A = build_state_matrix(net, net.beta_lo, net.delta_hi, 0.24)
    np.testing.assert_array_equal(tightest_stationary_certificate(A, net.cost, 0.93), 0.0)


def test_risk_report():
    rep = risk_report(np.array([[2.0, 4.0], [1.0, 1.0]]), [0.5, 0.25])
    assert rep.max_risk == 1.0 and rep.sum_risk == 2.0 and rep.argmax == 0
    assert rep.to_csv().splitlines()[0] == "node,p1,x_hat,risk"
