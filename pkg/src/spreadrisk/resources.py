"""Logarithmic resource model and multi-stage allocation schedules.

Allocating ``u`` units to an edge scales its spreading rate by ``exp(-u / w)``;
allocating ``v`` units to a node shrinks the gap between its recovery rate and
the cap ``delta_cap`` by ``exp(-v / w)``. Allocations persist, so the rates in
force at stage k are driven by the cumulative allocation of stages 1..k.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .network import SpreadingNetwork

#: allocations below this are reported as exactly zero
DUST = 1e-9


def beta_from_allocation(beta_hi_1, w, cumulative_u):
    """Spreading rate after a cumulative edge allocation."""
    return np.asarray(beta_hi_1) * np.exp(-np.asarray(cumulative_u) / np.asarray(w))


def delta_from_allocation(delta_lo_1, delta_cap, w, cumulative_v):
    """Recovery rate after a cumulative node allocation; always below ``delta_cap``."""
    gap = np.asarray(delta_cap) - np.asarray(delta_lo_1)
    return np.asarray(delta_cap) - gap * np.exp(-np.asarray(cumulative_v) / np.asarray(w))


def edge_resource(beta_ref, w, beta):
    """Resources needed to lower a spreading rate from ``beta_ref`` to ``beta``."""
    return np.asarray(w) * np.log(np.asarray(beta_ref) / np.asarray(beta))


def node_resource(delta_ref, delta_cap, w, delta):
    """Resources needed to raise a recovery rate from ``delta_ref`` to ``delta``."""
    return np.asarray(w) * np.log((delta_cap - np.asarray(delta_ref)) / (delta_cap - np.asarray(delta)))


def max_edge_resource(net: SpreadingNetwork) -> np.ndarray:
    """Cumulative edge allocation that drives each rate to its floor."""
    return net.w_edge * np.log(net.beta_hi / net.beta_lo)


def max_node_resource(net: SpreadingNetwork) -> np.ndarray:
    """Cumulative node allocation that drives each recovery rate to its ceiling."""
    return net.w_node * np.log((net.delta_cap - net.delta_lo) / (net.delta_cap - net.delta_hi))


@dataclass(frozen=True, eq=False)
class AllocationSchedule:
    """Per-stage edge allocations ``u[k, e]`` and node allocations ``v[k, i]``."""

    network: SpreadingNetwork
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.array(self.u, dtype=float, copy=True)
        v = np.array(self.v, dtype=float, copy=True)
        if u.ndim != 2 or v.ndim != 2 or u.shape[0] != v.shape[0]:
            raise ValueError("u and v must be 2-D with a common stage axis")
        if u.shape[1] != self.network.m or v.shape[1] != self.network.n:
            raise ValueError("allocation shape does not match the network")
        if np.any(u < 0) or np.any(v < 0):
            raise ValueError("allocations must be nonnegative")
        u.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @classmethod
    def zeros(cls, network: SpreadingNetwork, K: int) -> "AllocationSchedule":
        return cls(network, np.zeros((K, network.m)), np.zeros((K, network.n)))

    @property
    def K(self) -> int:
        return self.u.shape[0]

    def cumulative(self, k: int):
        """Cumulative ``(U, V)`` in force during stage ``k`` (0-based, inclusive)."""
        k = min(k, self.K - 1)
        return self.u[: k + 1].sum(axis=0), self.v[: k + 1].sum(axis=0)

    def rates(self, k: int):
        """``(beta, delta)`` in force during stage ``k`` (0-based); stages past K reuse K."""
        net = self.network
        U, V = self.cumulative(k)
        beta = beta_from_allocation(net.beta_hi, net.w_edge, U)
        delta = delta_from_allocation(net.delta_lo, net.delta_cap, net.w_node, V)
        return beta, delta

    def stage_rates(self):
        return [self.rates(k) for k in range(self.K)]

    def cleaned(self, dust: float = DUST) -> "AllocationSchedule":
        """Copy with allocations below ``dust`` set to zero."""
        u = np.where(self.u < dust, 0.0, self.u)
        v = np.where(self.v < dust, 0.0, self.v)
        return AllocationSchedule(self.network, u, v)

    def with_stage(self, k: int, u=None, v=None) -> "AllocationSchedule":
        uu, vv = self.u.copy(), self.v.copy()
        if u is not None:
            uu[k] = u
        if v is not None:
            vv[k] = v
        return AllocationSchedule(self.network, uu, vv)

    def nonzeros(self, tau: float = 1e-6):
        """Number of (stage, edge) and (stage, node) entries above ``tau``."""
        return int(np.count_nonzero(self.u > tau)), int(np.count_nonzero(self.v > tau))

    def to_dict(self) -> dict:
        net = self.network
        ids = net.node_ids
        stages = []
        for k in range(self.K):
            stages.append({
                "k": k + 1,
                "edges": [{"src": ids[net.src[e]], "dst": ids[net.dst[e]], "u": float(self.u[k, e])}
                          for e in np.flatnonzero(self.u[k] > 0)],
                "nodes": [{"id": ids[i], "v": float(self.v[k, i])}
                          for i in np.flatnonzero(self.v[k] > 0)],
            })
        return {"format": "spreadrisk-schedule/1", "K": self.K, "stages": stages}

    @classmethod
    def from_dict(cls, doc: dict, network: SpreadingNetwork) -> "AllocationSchedule":
        stages = sorted(doc["stages"], key=lambda s: s["k"])
        K = int(doc.get("K", len(stages)))
        u = np.zeros((K, network.m))
        v = np.zeros((K, network.n))
        eidx = network.edge_index
        for st in stages:
            k = int(st["k"]) - 1
            if not 0 <= k < K:
                raise ValueError(f"stage index {k + 1} outside 1..{K}")
            for e in st.get("edges", []):
                key = (network.node_position(e["dst"]), network.node_position(e["src"]))
                if key not in eidx:
                    raise ValueError(f"schedule edge {e['src']}->{e['dst']} not in network")
                u[k, eidx[key]] = e["u"]
            for nd in st.get("nodes", []):
                v[k, network.node_position(nd["id"])] = nd["v"]
        return cls(network, u, v)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path, network: SpreadingNetwork) -> "AllocationSchedule":
        return cls.from_dict(json.loads(Path(path).read_text()), network)

    def to_csv(self) -> str:
        """Flat table ``k,kind,src,dst,amount`` (node rows have an empty ``src``)."""
        net = self.network
        ids = net.node_ids
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["k", "kind", "src", "dst", "amount"])
        for k in range(self.K):
            for e in np.flatnonzero(self.u[k] > 0):
                wr.writerow([k + 1, "edge", ids[net.src[e]], ids[net.dst[e]], repr(float(self.u[k, e]))])
            for i in np.flatnonzero(self.v[k] > 0):
                wr.writerow([k + 1, "node", "", ids[i], repr(float(self.v[k, i]))])
        return buf.getvalue()


def stage_bounds(network: SpreadingNetwork, schedule: AllocationSchedule, k: int):
    """Rate bounds ``(beta_hi^k, delta_lo^k)`` at the start of stage ``k`` (0-based).

    These are the rates left by stages before ``k``; ``k = 0`` gives the
    unmodified rates.
    """
    if k == 0:
        return network.beta_hi.copy(), network.delta_lo.copy()
    U = schedule.u[:k].sum(axis=0)
    V = schedule.v[:k].sum(axis=0)
    return (beta_from_allocation(network.beta_hi, network.w_edge, U),
            delta_from_allocation(network.delta_lo, network.delta_cap, network.w_node, V))


@dataclass(frozen=True)
class BudgetUsage:
    per_stage: np.ndarray
    total: float

    def within(self, gamma_stage=None, gamma_total=None, tol: float = 1e-6) -> bool:
        ok = True
        if gamma_stage is not None:
            for used, g in zip(self.per_stage, gamma_stage):
                if g is not None and used > g + tol:
                    ok = False
        if gamma_total is not None and self.total > gamma_total + tol:
            ok = False
        return ok


def budget_usage(schedule: AllocationSchedule) -> BudgetUsage:
    per_stage = schedule.u.sum(axis=1) + schedule.v.sum(axis=1)
    return BudgetUsage(per_stage=per_stage, total=float(per_stage.sum()))
