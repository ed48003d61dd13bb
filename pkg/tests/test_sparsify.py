import math

import numpy as np
import pytest

from helpers import scalar_network
from spreadrisk.network import SpreadingNetwork, StageParameters
from spreadrisk.planning import plan_risk
from spreadrisk.scenarios import build_epidemic7, epidemic7_params
from spreadrisk.sparsify import reweight, reweighted_solve


def stable_chain():
    return SpreadingNetwork(n=3, src=[0, 1, 1, 2], dst=[1, 0, 2, 1], beta_lo=[0.005] * 4, beta_hi=[0.1] * 4,
                            w_edge=[1] * 4, delta_lo=[0.4] * 3, delta_hi=[0.8] * 3, delta_cap=1.0,
                            cost=[1, 1, 1], x_hat=[0.5, 0.2, 0.1], w_node=[1] * 3)


def test_infinite_cap_converges_to_empty_support():
    res = reweighted_solve(stable_chain(), StageParameters(K=2, h=0.5, alpha=0.9, gamma_stage=1.0),
                           problem="P2", gamma=math.inf)
    assert res.converged and len(res.history) == 2
    assert res.nonzeros == (0, 0)


def test_reweight():
    wu, wv = reweight(np.array([0.0, 1.0]), np.array([2.0]), eps=0.5)
    np.testing.assert_allclose(wu, [2.0, 1 / 1.5])
    np.testing.assert_allclose(wv, [0.4])
    with pytest.raises(ValueError):
        reweight(np.zeros(1), np.zeros(1), eps=0)


def test_p1_objective_mode_keeps_the_risk_level():
    net = build_epidemic7()
    params = epidemic7_params()
    base = plan_risk(net, params).max_risk
    res = reweighted_solve(net, params, problem="P1", mode="objective")
    assert res.plan.max_risk <= base * (1 + 2e-6)
    assert sum(res.nonzeros) <= res.history[0].nonzeros_u + res.history[0].nonzeros_v


def test_cap_mode_respects_the_cap():
    net = build_epidemic7()
    params = epidemic7_params()
    res = reweighted_solve(net, params, problem="P1", mode="cap", cap=4.0, q_max=4)
    assert all(it.feasible for it in res.history)
    assert res.history[0].phi <= 4.0 * (1 + 1e-6)


def test_polish_keeps_support_and_cap():
    net = build_epidemic7()
    params = epidemic7_params()
    gamma = 1.2 * plan_risk(net, params).max_risk
    res = reweighted_solve(net, params, gamma=gamma, polish=True)
    assert res.polished and res.plan.max_risk <= gamma * (1 + 1e-6)


def test_log_csv_and_argument_checks():
    res = reweighted_solve(scalar_network(), StageParameters(K=1, h=0.5, alpha=0.9, gamma_stage=1.0),
                           gamma=2.0, q_max=3)
    assert res.log_csv().splitlines()[0] == "q,objective,nonzeros_u,nonzeros_v,max_risk"
    with pytest.raises(ValueError):
        reweighted_solve(scalar_network(), StageParameters(K=1, h=0.5, alpha=0.9), problem="P2")
    with pytest.raises(ValueError):
        reweighted_solve(scalar_network(), StageParameters(K=1, h=0.5, alpha=0.9), mode="cap", gamma=1.0)
