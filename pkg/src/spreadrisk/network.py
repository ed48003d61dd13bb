"""Static problem data for a spreading process on a directed graph.

Edges are stored as ``(src, dst)`` pairs: node ``src`` (j) can infect node
``dst`` (i), so the spreading rate of an edge fills entry ``(dst, src)`` of the
state matrix. Undirected processes are described by emitting both directions.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SpreadingNetwork:
    """Graph, rate bounds, costs, outbreak estimates and resource weights.

    Per-edge arrays are aligned with ``src``/``dst``; per-node arrays have
    length ``n``. Instances are immutable.
    """

    n: int
    src: np.ndarray
    dst: np.ndarray
    beta_lo: np.ndarray
    beta_hi: np.ndarray
    w_edge: np.ndarray
    delta_lo: np.ndarray
    delta_hi: np.ndarray
    delta_cap: float
    cost: np.ndarray
    x_hat: np.ndarray
    w_node: np.ndarray
    node_ids: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = int(self.n)
        object.__setattr__(self, "n", n)
        for name in ("src", "dst"):
            object.__setattr__(self, name, _frozen(getattr(self, name), dtype=np.int64))
        for name in ("beta_lo", "beta_hi", "w_edge", "delta_lo", "delta_hi",
                     "cost", "x_hat", "w_node"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "delta_cap", float(self.delta_cap))
        if not self.node_ids:
            object.__setattr__(self, "node_ids", tuple(range(1, n + 1)))
        else:
            object.__setattr__(self, "node_ids", tuple(self.node_ids))

        m = len(self.src)
        for name in ("dst", "beta_lo", "beta_hi", "w_edge"):
            if len(getattr(self, name)) != m:
                raise ValueError(f"edge array {name!r} has length {len(getattr(self, name))}, expected {m}")
        for name in ("delta_lo", "delta_hi", "cost", "x_hat", "w_node"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"node array {name!r} has length {len(getattr(self, name))}, expected {n}")
        if len(self.node_ids) != n:
            raise ValueError("node_ids length does not match n")
        if m and (self.src.min() < 0 or self.dst.min() < 0 or max(self.src.max(), self.dst.max()) >= n):
            raise ValueError("edge endpoint out of range")
        keys = set(zip(self.dst.tolist(), self.src.tolist()))
        if len(keys) != m:
            raise ValueError("duplicate directed edge")

    @property
    def m(self) -> int:
        """Number of directed edges."""
        return len(self.src)

    @property
    def edge_index(self) -> dict:
        """Map ``(target, source) -> edge position``."""
        idx = self.__dict__.get("_edge_index")
        if idx is None:
            idx = {(int(i), int(j)): e for e, (i, j) in enumerate(zip(self.dst, self.src))}
            object.__setattr__(self, "_edge_index", idx)
        return idx

    def node_position(self, node_id) -> int:
        try:
            return self.node_ids.index(node_id)
        except ValueError:
            raise KeyError(f"unknown node id {node_id!r}") from None

    def has_edge(self, src_id, dst_id) -> bool:
        return (self.node_position(dst_id), self.node_position(src_id)) in self.edge_index

    def in_degree_mass(self, beta: Optional[np.ndarray] = None) -> np.ndarray:
        """Per-node sum of incoming spreading rates (defaults to ``beta_hi``)."""
        beta = self.beta_hi if beta is None else beta
        return np.bincount(self.dst, weights=beta, minlength=self.n)

    def replace(self, **changes) -> "SpreadingNetwork":
        kw = {name: getattr(self, name) for name in (
            "n", "src", "dst", "beta_lo", "beta_hi", "w_edge", "delta_lo", "delta_hi",
            "delta_cap", "cost", "x_hat", "w_node", "node_ids", "meta")}
        kw.update(changes)
        return SpreadingNetwork(**kw)

    def to_dict(self) -> dict:
        ids = self.node_ids
        doc = {
            "format": "spreadrisk-network/1",
            "delta_cap": self.delta_cap,
            "nodes": [
                {"id": ids[i], "cost": float(self.cost[i]), "x_hat": float(self.x_hat[i]),
                 "delta_lo": float(self.delta_lo[i]), "delta_hi": float(self.delta_hi[i]),
                 "w": float(self.w_node[i])}
                for i in range(self.n)
            ],
            "edges": [
                {"src": ids[j], "dst": ids[i], "beta_lo": float(self.beta_lo[e]),
                 "beta_hi": float(self.beta_hi[e]), "w": float(self.w_edge[e])}
                for e, (i, j) in enumerate(zip(self.dst.tolist(), self.src.tolist()))
            ],
        }
        if self.meta:
            doc["meta"] = self.meta
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "SpreadingNetwork":
        nodes = doc["nodes"]
        ids = [nd["id"] for nd in nodes]
        pos = {nid: k for k, nid in enumerate(ids)}
        if len(pos) != len(ids):
            raise ValueError("duplicate node id")
        edges = doc.get("edges", [])
        try:
            src = [pos[e["src"]] for e in edges]
            dst = [pos[e["dst"]] for e in edges]
        except KeyError as exc:
            raise ValueError(f"edge refers to unknown node {exc.args[0]!r}") from None
        return cls(
            n=len(nodes),
            src=src,
            dst=dst,
            beta_lo=[e["beta_lo"] for e in edges],
            beta_hi=[e["beta_hi"] for e in edges],
            w_edge=[e.get("w", 1.0) for e in edges],
            delta_lo=[nd["delta_lo"] for nd in nodes],
            delta_hi=[nd["delta_hi"] for nd in nodes],
            delta_cap=doc["delta_cap"],
            cost=[nd.get("cost", 0.0) for nd in nodes],
            x_hat=[nd.get("x_hat", 0.0) for nd in nodes],
            w_node=[nd.get("w", 1.0) for nd in nodes],
            node_ids=tuple(ids),
            meta=doc.get("meta", {}),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "SpreadingNetwork":
        return cls.from_dict(json.loads(Path(path).read_text()))


def undirected(n: int, pairs: Sequence[tuple], beta_lo, beta_hi, w=1.0):
    """Expand undirected ``pairs`` (0-based) into both directions.

    Scalar or per-pair rate/weight arguments are accepted. Returns
    ``(src, dst, beta_lo, beta_hi, w)`` arrays ready for :class:`SpreadingNetwork`.
    """
    pairs = list(pairs)
    k = len(pairs)
    blo = np.broadcast_to(np.asarray(beta_lo, float), (k,))
    bhi = np.broadcast_to(np.asarray(beta_hi, float), (k,))
    ww = np.broadcast_to(np.asarray(w, float), (k,))
    src, dst = [], []
    for a, b in pairs:
        if a == b or not (0 <= a < n and 0 <= b < n):
            raise ValueError(f"bad pair {(a, b)}")
        src += [a, b]
        dst += [b, a]
    rep = lambda x: np.repeat(x, 2)  # noqa: E731
    return np.array(src, int), np.array(dst, int), rep(blo), rep(bhi), rep(ww)


@dataclass(frozen=True)
class StageParameters:
    """Horizon, discretisation and budget settings for a K-stage plan."""

    K: int
    h: float
    alpha: float
    gamma_stage: Optional[tuple] = None
    gamma_total: Optional[float] = None

    def __post_init__(self):
        if self.gamma_stage is not None:
            gs = self.gamma_stage
            if np.isscalar(gs):
                gs = (float(gs),) * int(self.K)
            gs = tuple(None if g is None else float(g) for g in gs)
            if len(gs) != self.K:
                raise ValueError(f"gamma_stage has {len(gs)} entries, expected K={self.K}")
            object.__setattr__(self, "gamma_stage", gs)

    def stage_budget(self, k: int) -> Optional[float]:
        """Budget of stage ``k`` (0-based), or None when uncapped."""
        if self.gamma_stage is None:
            return None
        return self.gamma_stage[k]


def _report(out: list, mask, message: str, names, detail=None, shown: int = 5) -> None:
    """Append one message naming the first few offending items of ``mask``."""
    idx = np.flatnonzero(mask)
    if not len(idx):
        return
    items = [names(i) + ("" if detail is None else f" ({detail(i)})") for i in idx[:shown]]
    more = f" and {len(idx) - shown} more" if len(idx) > shown else ""
    out.append(f"{message} at {', '.join(items)}{more}")


def validate(network: SpreadingNetwork, params: Optional[StageParameters] = None) -> list[str]:
    """Return a list of human-readable invariant violations (empty when valid).

    Each violated invariant yields one message listing the first offenders.
    """
    out = []
    net = network
    ids = net.node_ids
    edge = lambda e: f"edge {_edge_name(net, e)}"  # noqa: E731
    node = lambda i: f"node {ids[i]}"  # noqa: E731
    if net.n < 1:
        out.append("n must be >= 1")
    _report(out, net.src == net.dst, "self-loop edges are not allowed", edge)
    _report(out, ~(net.beta_lo > 0), "beta_lo must be > 0", edge)
    _report(out, net.beta_lo > net.beta_hi, "beta_lo > beta_hi", edge)
    _report(out, ~(net.w_edge > 0), "w must be > 0", edge)
    _report(out, ~(net.delta_lo > 0), "delta_lo must be > 0", node)
    _report(out, net.delta_lo > net.delta_hi, "delta_lo > delta_hi", node)
    _report(out, ~(net.delta_hi < net.delta_cap), "delta_hi must be < delta_cap", node)
    _report(out, ~(net.cost >= 0), "cost must be >= 0", node)
    _report(out, ~((net.x_hat >= 0) & (net.x_hat <= 1)), "x_hat must lie in [0, 1]", node)
    _report(out, ~(net.w_node > 0), "w must be > 0", node)

    if params is not None:
        p = params
        if p.K < 1:
            out.append("K must be >= 1")
        if not p.h > 0:
            out.append("h must be > 0")
        if not 0 < p.alpha <= 1:
            out.append("alpha must lie in (0, 1]")
        if not p.h * net.delta_cap < 1:
            out.append(f"h·delta_cap = {p.h * net.delta_cap:g} must be < 1")
        _report(out, p.h * net.delta_hi > 1, "h·δ > 1", node,
                lambda i: f"h·delta_hi = {p.h * net.delta_hi[i]:g}")
        mass = p.h * net.in_degree_mass()
        _report(out, ~(mass < 1), "h·Σβ must be < 1", node, lambda i: f"got {mass[i]:g}")
        for k, g in enumerate(p.gamma_stage or ()):
            if g is not None and g < 0:
                out.append(f"stage budget {k + 1} must be >= 0")
        if p.gamma_total is not None and p.gamma_total < 0:
            out.append("total budget must be >= 0")
    return out


def warn_zero_costs(network: SpreadingNetwork) -> None:
    zero = np.flatnonzero(network.cost == 0)
    if len(zero):
        warnings.warn(
            f"{len(zero)} node(s) have zero cost; their constant cost term is dropped", stacklevel=2)


def _edge_name(net: SpreadingNetwork, e: int) -> str:
    return f"{net.node_ids[net.src[e]]}->{net.node_ids[net.dst[e]]}"
