import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import random_network
from spreadrisk.resources import (AllocationSchedule, beta_from_allocation, budget_usage,
                                  delta_from_allocation, edge_resource, max_edge_resource,
                                  max_node_resource, node_resource)
from spreadrisk.scenarios import build_epidemic7


@given(u=st.floats(0, 20), v=st.floats(0, 20), w=st.floats(0.1, 5))
def test_rate_maps_invert(u, v, w):
    b = beta_from_allocation(0.4, w, u)
    d = delta_from_allocation(0.2, 1.0, w, v)
    assert 0 < b <= 0.4
    assert 0.2 - 1e-12 <= d <= 1.0
    assert edge_resource(0.4, w, b) == pytest.approx(u, abs=1e-9 * max(1, u))
    if d < 1 - 1e-9:
        assert node_resource(0.2, 1.0, w, d) == pytest.approx(v, rel=1e-6, abs=1e-9)


def test_max_resources_reach_the_bounds():
    net = build_epidemic7()
    np.testing.assert_allclose(beta_from_allocation(net.beta_hi, net.w_edge, max_edge_resource(net)), net.beta_lo)
    np.testing.assert_allclose(delta_from_allocation(net.delta_lo, net.delta_cap, net.w_node,
                                                     max_node_resource(net)), net.delta_hi)


def test_rates_use_cumulative_allocation():
    net = build_epidemic7()
    u = np.zeros((3, net.m))
    u[0, 0], u[2, 0] = 0.5, 0.25
    s = AllocationSchedule(net, u, np.zeros((3, net.n)))
    b = [s.rates(k)[0][0] for k in range(4)]
    assert b[0] == b[1] == pytest.approx(net.beta_hi[0] * np.exp(-0.5))
    assert b[2] == b[3] == pytest.approx(net.beta_hi[0] * np.exp(-0.75))


def test_schedule_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(5)
    net, _ = random_network(rng, 7)
    u = rng.random((3, net.m)) * (rng.random((3, net.m)) < 0.3)
    v = rng.random((3, net.n)) * (rng.random((3, net.n)) < 0.3)
    s = AllocationSchedule(net, u, v)
    s.save(tmp_path / "s.json")
    back = AllocationSchedule.load(tmp_path / "s.json", net)
    assert back.u.tobytes() == s.u.tobytes() and back.v.tobytes() == s.v.tobytes()
    assert s.to_csv().splitlines()[0] == "k,kind,src,dst,amount"


def test_schedule_rejects_bad_input():
    net = build_epidemic7()
    with pytest.raises(ValueError):
        AllocationSchedule(net, -np.ones((1, net.m)), np.zeros((1, net.n)))
    with pytest.raises(ValueError):
        AllocationSchedule(net, np.zeros((1, net.m + 1)), np.zeros((1, net.n)))
    doc = {"K": 1, "stages": [{"k": 1, "edges": [{"src": 1, "dst": 4, "u": 1.0}], "nodes": []}]}
    with pytest.raises(ValueError, match="not in network"):
        AllocationSchedule.from_dict(doc, net)


def test_budget_usage():
    net = build_epidemic7()
    u = np.zeros((2, net.m))
    v = np.zeros((2, net.n))
    u[0, 0], v[0, 1], v[1, 2] = 0.5, 0.5, 0.75
    use = budget_usage(AllocationSchedule(net, u, v))
    np.testing.assert_allclose(use.per_stage, [1.0, 0.75])
    assert use.total == pytest.approx(1.75)
    assert use.within((1.0, 1.0), 1.75)
    assert not use.within((0.9, 1.0), None)
    assert not use.within(None, 1.7)
