import math

import numpy as np
import pytest

from helpers import random_network, random_params, scalar_network
from spreadrisk.certificate import backward_certificate, schedule_matrices
from spreadrisk.conic import ConeProgram, SolveOptions, build_problem1, build_problem2, solve
from spreadrisk.network import StageParameters
from spreadrisk.planning import SolveFailed, minimize_resources, plan_risk
from spreadrisk.scenarios import build_epidemic7, epidemic7_params


def test_dump_round_trip():
    net = build_epidemic7()
    prog = build_problem1(net, epidemic7_params(K=2), mode="sum")
    text = prog.dumps()
    back = ConeProgram.loads(text)
    assert back.dumps() == text
    assert (back.G != prog.G).nnz == 0
    # terms are listed per constraint, so compare the constraint values themselves
    x = np.random.default_rng(0).normal(size=prog.nvar)
    np.testing.assert_array_equal(back.lse_values(x), prog.lse_values(x))
    np.testing.assert_array_equal(back.c, prog.c)
    with pytest.raises(ValueError):
        ConeProgram.loads("nonsense\n")


def test_solver_point_is_feasible_and_solution_reverified():
    net = build_epidemic7()
    params = epidemic7_params()
    prog = build_problem1(net, params)
    res = solve(prog)
    assert res.optimal and res.max_violation <= 1e-8
    assert prog.violation(res.x) <= 1e-8
    plan = plan_risk(net, params)
    assert plan.check.valid
    # the returned prices are never below the tightest certificate of the returned schedule
    tight = backward_certificate(schedule_matrices(plan.schedule, params.h), net.cost, params.alpha)
    assert np.all(plan.certificate.p >= tight * (1 - 1e-6))
    assert plan.max_risk == pytest.approx(float((tight[0] * net.x_hat).max()), rel=1e-5)


def test_more_budget_never_hurts():
    net = build_epidemic7()
    risks = [plan_risk(net, epidemic7_params(gamma_stage=g)).max_risk for g in (0.5, 1.0, 2.0)]
    assert risks[0] >= risks[1] >= risks[2]


def test_sum_mode_dominates_max():
    net = build_epidemic7()
    plan = plan_risk(net, epidemic7_params(), mode="sum")
    assert plan.report.sum_risk >= plan.report.max_risk


def test_cvxpy_backend_agrees():
    pytest.importorskip("cvxpy")
    rng = np.random.default_rng(11)
    for _ in range(3):
        net, h = random_network(rng, 5)
        params = random_params(rng, h, K=2)
        try:
            a = plan_risk(net, params, backend="clarabel")
        except SolveFailed:
            continue
        b = plan_risk(net, params, backend="cvxpy")
        assert a.max_risk == pytest.approx(b.max_risk, rel=1e-4)


def test_infeasible_status():
    net = build_epidemic7()
    with pytest.raises(SolveFailed) as exc:
        plan_risk(net, epidemic7_params(gamma_stage=0.0))
    assert exc.value.status == "infeasible"
    with pytest.raises(SolveFailed):
        minimize_resources(net, epidemic7_params(), gamma=1e-3)


def test_problem2_on_a_stable_network_needs_nothing_at_infinite_cap():
    net = scalar_network()
    params = StageParameters(K=2, h=0.5, alpha=0.9, gamma_stage=1.0)
    plan = minimize_resources(net, params, math.inf)
    assert plan.usage.total <= 1e-7


def test_problem2_meets_the_cap_at_least_cost():
    net = build_epidemic7()
    params = epidemic7_params()
    best = plan_risk(net, params)
    gamma = 1.5 * best.max_risk
    plan = minimize_resources(net, params, gamma)
    assert plan.max_risk <= gamma * (1 + 1e-6)
    assert plan.usage.total <= best.usage.total + 1e-6


def test_bad_inputs():
    net = build_epidemic7()
    with pytest.raises(ValueError):
        build_problem1(net, epidemic7_params(), mode="median")
    with pytest.raises(ValueError):
        build_problem2(net, epidemic7_params(), gamma=-1)
    with pytest.raises(ValueError):
        build_problem1(net.replace(x_hat=np.zeros(7)), epidemic7_params())
    with pytest.raises(ValueError):
        solve(build_problem1(net, epidemic7_params()), backend="nope")


def test_backend_env(monkeypatch):
    monkeypatch.setenv("SPREADRISK_BACKEND", "clarabel")
    res = solve(build_problem1(scalar_network(), StageParameters(K=1, h=0.5, alpha=0.9, gamma_stage=1.0)),
                SolveOptions(max_iters=200))
    assert res.backend == "clarabel" and res.optimal
