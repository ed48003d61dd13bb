"""Preset scenarios: a 7-node vaccination graph and gridded wildfire landscapes.

Both are reconstructions. The vaccination graph keeps the stated adjacencies
(node 7 hangs off node 6, node 6 touches node 1) and fills in a small
population cluster; landscapes use a configurable raster, wind model and
diagonal correction.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .network import SpreadingNetwork, StageParameters, undirected

# ----------------------------------------------------------------------------
# epidemic

#: undirected contact pairs (1-based); 7-6 and 6-1 are fixed, the rest is a reconstruction
EPIDEMIC7_PAIRS = [(1, 6), (6, 7), (1, 2), (2, 3), (3, 4), (4, 5)]
EPIDEMIC7_X_HAT = [0.6, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1]
EPIDEMIC7_COST = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 10.0]


def build_epidemic7(beta: float = 0.35, delta: float = 0.2, delta_cap: float = 1.0,
                    beta_floor: float = 1 / 20, delta_ceiling: float = 0.9,
                    pairs=None, x_hat=None, cost=None, w: float = 1.0) -> SpreadingNetwork:
    """Vaccination example with homogeneous rates ``beta`` and ``delta``.

    ``beta_floor`` is the lowest reachable spreading rate as a fraction of
    ``beta``; ``delta_ceiling`` the highest reachable recovery rate as a
    fraction of ``delta_cap``.
    """
    pairs = EPIDEMIC7_PAIRS if pairs is None else pairs
    src, dst, blo, bhi, ww = undirected(7, [(a - 1, b - 1) for a, b in pairs],
                                        beta * beta_floor, beta, w)
    return SpreadingNetwork(
        n=7, src=src, dst=dst, beta_lo=blo, beta_hi=bhi, w_edge=ww,
        delta_lo=np.full(7, delta), delta_hi=np.full(7, delta_ceiling * delta_cap),
        delta_cap=delta_cap,
        cost=EPIDEMIC7_COST if cost is None else cost,
        x_hat=EPIDEMIC7_X_HAT if x_hat is None else x_hat,
        w_node=np.full(7, w), node_ids=tuple(range(1, 8)),
        meta={"scenario": "epidemic7"},
    )


def epidemic7_params(K: int = 4, gamma_stage: float = 1.5, gamma_total: Optional[float] = None) -> StageParameters:
    return StageParameters(K=K, h=0.24, alpha=0.93, gamma_stage=gamma_stage, gamma_total=gamma_total)


# ----------------------------------------------------------------------------
# wildfire

VEGETATION = {"D": "desert", "G": "grassland", "E": "eucalypt", "W": "water", "C": "city"}
BETA_VEG = {"desert": 0.1, "grassland": 1.0, "eucalypt": 1.4, "city": 0.5}

# (d_row, d_col) for the 8 neighbours; row index grows southwards
_NEIGHBOURS = [(-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1)]


def wind_factor(V: float, theta, c1: float = 0.045, c2: float = 0.131):
    """Wind multiplier for spread at angle ``theta`` (radians) to the downwind direction."""
    if V < 0:
        raise ValueError("wind speed must be >= 0")
    theta = np.asarray(theta, float)
    return np.exp(c1 * V) * np.exp(V * c2 * (np.cos(theta) - 1.0))


def wind_vector(bearing_deg: float):
    """Unit ``(d_row, d_col)`` the wind blows towards, for a wind coming *from* ``bearing_deg``."""
    to = math.radians(bearing_deg + 180.0)
    east, north = math.sin(to), math.cos(to)
    return (-north, east)


@dataclass
class LandscapeSpec:
    """Raster landscape; one character per cell (D/G/E/W/C)."""

    raster: list
    wind_speed: float = 4.0
    wind_bearing: float = 45.0  # compass degrees the wind comes from; 45 = northeasterly
    beta_base: float = 0.5
    beta_veg: dict = field(default_factory=lambda: dict(BETA_VEG))
    delta: float = 0.5
    delta_cap: float = 1.0
    city_cost: float = 1.0
    other_cost: float = 0.001
    outbreak: Optional[list] = None  # height x width, defaults to ``outbreak_preset``
    outbreak_preset: str = "diffuse"
    diagonal_factor: float = math.pi / 4
    beta_floor: float = 1 / 20
    wind_c1: float = 0.045
    wind_c2: float = 0.131
    eight_connected: bool = True

    def __post_init__(self):
        self.raster = [str(r) for r in self.raster]
        if not self.raster or len({len(r) for r in self.raster}) != 1:
            raise ValueError("raster rows must be non-empty and of equal length")
        bad = {ch for r in self.raster for ch in r} - set(VEGETATION)
        if bad:
            raise ValueError(f"unknown vegetation codes {sorted(bad)}; legend is D/G/E/W/C")

    @property
    def height(self) -> int:
        return len(self.raster)

    @property
    def width(self) -> int:
        return len(self.raster[0])

    @property
    def n(self) -> int:
        return self.height * self.width

    def grid(self) -> np.ndarray:
        return np.array([list(r) for r in self.raster])

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "LandscapeSpec":
        doc = dict(doc)
        doc.pop("format", None)
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "LandscapeSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        doc = {"format": "spreadrisk-landscape/1", **self.to_dict()}
        Path(path).write_text(json.dumps(doc, indent=1))


def outbreak_map(spec: LandscapeSpec, preset: Optional[str] = None) -> np.ndarray:
    """Outbreak probabilities per cell.

    ``diffuse``: 0.01 everywhere burnable, raised to 0.2 on eucalypt cells and
    0.1 along the road (:func:`road_row`); no fires start inside the city.
    ``point``: 0.9 on a 2x2 eucalypt block, zero elsewhere.
    """
    if spec.outbreak is not None:
        out = np.asarray(spec.outbreak, float)
        if out.shape != (spec.height, spec.width):
            raise ValueError("outbreak map shape does not match the raster")
        return out
    g = spec.grid()
    preset = preset or spec.outbreak_preset
    H, W = g.shape
    if preset == "diffuse":
        out = np.full((H, W), 0.01)
        out[g == "E"] = 0.2
        r = road_row(spec)
        out[r, :] = np.maximum(out[r, :], 0.1)
        out[g == "C"] = 0.0
    elif preset == "point":
        out = np.zeros((H, W))
        r, c = point_outbreak_cell(spec)
        out[r:r + 2, c:c + 2] = 0.9
    else:
        raise ValueError(f"unknown outbreak preset {preset!r}")
    out[g == "W"] = 0.0
    return out


def point_outbreak_cell(spec: LandscapeSpec):
    """Top-left corner of the 2x2 point-outbreak block: the first burnable 2x2 eucalypt block."""
    g = spec.grid()
    H, W = g.shape
    for r in range(H - 1):
        for c in range(W - 1):
            if np.all(g[r:r + 2, c:c + 2] == "E"):
                return r, c
    return H // 4, W // 4


def build_wildfire(spec: LandscapeSpec, preset: Optional[str] = None) -> SpreadingNetwork:
    """Grid network with vegetation- and wind-dependent spreading rates.

    Edges join burnable 8-neighbours (4-neighbours when ``eight_connected`` is
    off); water cells keep no edges. The rate of edge j -> i is
    ``beta_base * beta_veg[source] * wind(theta)``, times ``diagonal_factor``
    for diagonal neighbours. Only edges are intervened on: recovery rates are
    fixed at ``delta``.
    """
    g = spec.grid()
    H, W = g.shape
    n = H * W
    veg = np.vectorize(VEGETATION.get)(g)
    burnable = g != "W"
    wr, wc = wind_vector(spec.wind_bearing)
    nbrs = _NEIGHBOURS if spec.eight_connected else _NEIGHBOURS[:4]

    src, dst, beta = [], [], []
    rows, cols = np.nonzero(burnable)
    for dr, dc in nbrs:
        r2, c2 = rows + dr, cols + dc
        ok = (r2 >= 0) & (r2 < H) & (c2 >= 0) & (c2 < W)
        r1, c1, r2, c2 = rows[ok], cols[ok], r2[ok], c2[ok]
        ok = burnable[r2, c2]
        r1, c1, r2, c2 = r1[ok], c1[ok], r2[ok], c2[ok]
        norm = math.hypot(dr, dc)
        cos_t = (dr * wr + dc * wc) / norm
        theta = math.acos(max(-1.0, min(1.0, cos_t)))
        fw = float(wind_factor(spec.wind_speed, theta, spec.wind_c1, spec.wind_c2))
        fveg = np.array([spec.beta_veg[v] for v in veg[r1, c1]])
        b = spec.beta_base * fveg * fw
        if dr and dc:
            b = b * spec.diagonal_factor
        src.append(r1 * W + c1)
        dst.append(r2 * W + c2)
        beta.append(b)
    src = np.concatenate(src) if src else np.zeros(0, int)
    dst = np.concatenate(dst) if dst else np.zeros(0, int)
    beta = np.concatenate(beta) if beta else np.zeros(0)
    if len(src) == 0:
        raise ValueError("landscape has no burnable edges")
    order = np.lexsort((src, dst))
    src, dst, beta = src[order], dst[order], beta[order]

    cost = np.where(g == "C", spec.city_cost, spec.other_cost).ravel()
    x_hat = outbreak_map(spec, preset).ravel()
    return SpreadingNetwork(
        n=n, src=src, dst=dst, beta_lo=beta * spec.beta_floor, beta_hi=beta,
        w_edge=np.ones(len(src)), delta_lo=np.full(n, spec.delta), delta_hi=np.full(n, spec.delta),
        delta_cap=spec.delta_cap, cost=cost, x_hat=x_hat, w_node=np.ones(n),
        node_ids=tuple(range(n)),
        meta={"scenario": "wildfire", "height": H, "width": W, "raster": spec.raster},
    )


def wildfire_params(K: int = 4, gamma_stage: float = 10.0, gamma_total: Optional[float] = None) -> StageParameters:
    return StageParameters(K=K, h=0.036, alpha=0.9, gamma_stage=gamma_stage, gamma_total=gamma_total)


def _paint(H, W, fill="G"):
    return np.full((H, W), fill)


def default_landscape(width: int = 40, height: int = 25, **kw) -> LandscapeSpec:
    """Fictional landscape: a lakeside city south of a eucalypt forest, another stand to its east.

    The city sits inside a lake that leaves only its northern shore, a grass
    strip facing the forest, open to fire. Desert lies to the south-west, a
    second lake to the north-east and a river runs through the west. Sizes scale with the grid so smaller benchmark grids
    keep the same layout.
    """
    H, W = height, width
    g = _paint(H, W, "G")
    fy = lambda f: int(round(f * H))  # noqa: E731
    fx = lambda f: int(round(f * W))  # noqa: E731
    g[: fy(0.36), : fx(0.82)] = "E"             # northern eucalypt forest
    g[: fy(0.2), fx(0.88):] = "W"               # north-eastern lake
    g[fy(0.44):fy(0.76), fx(0.66):fx(0.8)] = "E"  # eastern eucalypt stand
    g[fy(0.62):, : fx(0.3)] = "D"               # south-western desert
    col = fx(0.15)
    g[fy(0.36):fy(0.62), col:col + 1] = "W"     # river
    g[fy(0.4):fy(0.8), fx(0.4):fx(0.6)] = "W"   # lake the city sits on
    g[fy(0.44):fy(0.68), fx(0.42):fx(0.58)] = "C"  # city
    g[fy(0.4), fx(0.42):fx(0.58)] = "G"         # shore facing the forest
    raster = ["".join(row) for row in g]
    return LandscapeSpec(raster=raster, **kw)


def road_row(spec: LandscapeSpec) -> int:
    """Row of the east-west road running between the northern forest and the city."""
    return int(round(0.4 * spec.height))


def count_allocation_patterns_log10(n_edges: int, per_step: int, steps: int) -> float:
    """``log10(C(n_edges, per_step) ** steps)`` computed exactly in integers."""
    comb = math.comb(n_edges, per_step)
    # integer log10 via digit count plus a float mantissa
    digits = len(str(comb)) - 1
    mantissa = comb / 10 ** digits
    return steps * (digits + math.log10(mantissa))


PRESETS = ("epidemic7", "wildfire", "wildfire-point", "wildfire-small")


def preset(name: str):
    """Return ``(network, params)`` for a named preset."""
    if name == "epidemic7":
        return build_epidemic7(), epidemic7_params()
    if name == "wildfire":
        return build_wildfire(default_landscape()), wildfire_params()
    if name == "wildfire-point":
        return build_wildfire(default_landscape(outbreak_preset="point")), wildfire_params()
    if name == "wildfire-small":
        return build_wildfire(default_landscape(20, 10)), wildfire_params()
    raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
