import math

import numpy as np
import pytest

from spreadrisk.network import validate
from spreadrisk.scenarios import (LandscapeSpec, PRESETS, build_wildfire, count_allocation_patterns_log10,
                                  default_landscape, outbreak_map, point_outbreak_cell, preset,
                                  wildfire_params, wind_factor, wind_vector)


def test_default_landscape_layout():
    spec = default_landscape()
    assert (spec.height, spec.width) == (25, 40) and spec.n == 1000
    g = spec.grid()
    for code in "DGEWC":
        assert (g == code).any()
    # city cells touch burnable land only on their northern side
    rows, cols = np.nonzero(g == "C")
    assert rows.min() > 0
    net = build_wildfire(spec)
    into = [(s, d) for s, d in zip(net.src, net.dst) if g.flat[d] == "C" and g.flat[s] != "C"]
    assert into and all(divmod(int(s), 40)[0] < rows.min() for s, _ in into)


def test_wildfire_network_properties():
    spec = default_landscape(20, 10)
    net = build_wildfire(spec)
    g = spec.grid().ravel()
    assert not np.isin(np.flatnonzero(g == "W"), np.concatenate([net.src, net.dst])).any()
    assert validate(net, wildfire_params()) == []
    np.testing.assert_allclose(net.beta_lo, net.beta_hi / 20)
    assert set(np.unique(net.cost)) == {0.001, 1.0}


def test_wind_model():
    assert wind_factor(4.0, 0.0) == pytest.approx(math.exp(0.045 * 4))
    assert wind_factor(4.0, math.pi) < wind_factor(4.0, math.pi / 2) < wind_factor(4.0, 0.0)
    assert wind_factor(0.0, 1.0) == 1.0
    dr, dc = wind_vector(45.0)  # from the north-east: blows towards the south-west
    assert dr > 0 and dc < 0
    with pytest.raises(ValueError):
        wind_factor(-1.0, 0.0)


def test_downwind_edges_are_faster():
    spec = LandscapeSpec(raster=["GGG", "GGG", "GGG"])
    net = build_wildfire(spec)
    rate = {(int(s), int(d)): b for s, d, b in zip(net.src, net.dst, net.beta_hi)}
    assert rate[(4, 6)] > rate[(4, 2)]  # south-west beats north-east
    assert rate[(4, 6)] == pytest.approx(0.5 * wind_factor(4.0, 0.0) * math.pi / 4)


def test_outbreak_maps():
    spec = default_landscape()
    g = spec.grid()
    d = outbreak_map(spec, "diffuse")
    assert (d[g == "C"] == 0).all() and (d[g == "W"] == 0).all() and (d[g == "E"] == 0.2).all()
    p = outbreak_map(spec, "point")
    r, c = point_outbreak_cell(spec)
    assert (g[r:r + 2, c:c + 2] == "E").all() and np.count_nonzero(p) == 4
    with pytest.raises(ValueError):
        outbreak_map(spec, "everywhere")


def test_landscape_round_trip_and_legend(tmp_path):
    spec = default_landscape(20, 10, wind_speed=2.0)
    spec.save(tmp_path / "l.json")
    back = LandscapeSpec.load(tmp_path / "l.json")
    assert back.raster == spec.raster and back.wind_speed == 2.0
    with pytest.raises(ValueError, match="legend"):
        LandscapeSpec(raster=["GX"])
    with pytest.raises(ValueError):
        LandscapeSpec(raster=["GG", "G"])


def test_pattern_count():
    assert count_allocation_patterns_log10(10, 2, 3) == pytest.approx(3 * math.log10(45))


def test_presets():
    for name in PRESETS:
        net, params = preset(name)
        assert validate(net, params) == []
    with pytest.raises(KeyError):
        preset("nope")
