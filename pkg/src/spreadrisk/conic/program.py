"""Canonical log-sum-exp programs and the two planning problems built on them.

A :class:`ConeProgram` is

    minimize    c @ x
    subject to  lo <= x <= hi
                G @ x <= h
                log(sum_{m in group r} exp(F[m] @ x + g[m])) <= 0   for every group r

The planning problems are posed in log-prices ``y = log p`` and per-stage
allocations ``u`` (edges) and ``v`` (nodes). Allocations persist: the rates
in force during stage k follow from the cumulative allocation of stages 1..k,
which keeps every constraint jointly convex.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from ..certificate import UnstableError, backward_certificate
from ..dynamics import build_state_matrix
from ..network import SpreadingNetwork, StageParameters, validate
from ..resources import max_edge_resource, max_node_resource

#: box on log-prices keeping the barrier bounded for weakly constrained nodes
Y_BOX = 50.0
#: slack (in log units) between the price envelope and the boxes built from it
ENVELOPE_MARGIN = math.log(2.0)


@dataclass
class ConeProgram:
    nvar: int
    names: list
    lo: np.ndarray
    hi: np.ndarray
    c: np.ndarray
    G: sp.csr_matrix
    h: np.ndarray
    lin_names: list
    F: sp.csr_matrix
    g: np.ndarray
    group: np.ndarray  # group index of every LSE term
    lse_names: list
    blocks: dict = field(default_factory=dict)  # name -> (offset, shape)
    meta: dict = field(default_factory=dict)

    @property
    def n_lse(self) -> int:
        return len(self.lse_names)

    @property
    def n_lin(self) -> int:
        return self.G.shape[0]

    def terms_per_group(self) -> np.ndarray:
        return np.bincount(self.group, minlength=self.n_lse)

    def block(self, x, name):
        off, shape = self.blocks[name]
        size = int(np.prod(shape))
        return np.asarray(x[off:off + size]).reshape(shape)

    def lse_values(self, x) -> np.ndarray:
        """Left-hand side of every log-sum-exp constraint at ``x``."""
        z = np.asarray(self.F @ x).ravel() + self.g
        zmax = np.full(self.n_lse, -np.inf)
        np.maximum.at(zmax, self.group, z)
        s = np.zeros(self.n_lse)
        np.add.at(s, self.group, np.exp(z - zmax[self.group]))
        return zmax + np.log(s)

    def violation(self, x) -> float:
        """Largest violation over boxes, linear rows and LSE rows."""
        x = np.asarray(x, float)
        parts = [0.0]
        parts.append(float(np.max(self.lo - x, initial=0.0)))
        parts.append(float(np.max(x - self.hi, initial=0.0)))
        if self.n_lin:
            parts.append(float(np.max(np.asarray(self.G @ x).ravel() - self.h)))
        if self.n_lse:
            parts.append(float(np.max(self.lse_values(x))))
        return max(parts)

    def objective(self, x) -> float:
        return float(self.c @ x)

    # -- text dump -----------------------------------------------------
    def dumps(self) -> str:
        """Plain-text listing; see README for the grammar."""
        out = ["spreadrisk-cone-program 1"]
        for k, val in sorted(self.meta.items()):
            out.append(f"meta {k} {json.dumps(val)}")
        for name, (off, shape) in self.blocks.items():
            out.append(f"block {name} {off} {' '.join(map(str, shape))}")
        for i, nm in enumerate(self.names):
            out.append(f"var {i} {nm} {_num(self.lo[i])} {_num(self.hi[i])}")
        out.append("objective " + _row(sp.csr_matrix(self.c), 0))
        for r, nm in enumerate(self.lin_names):
            out.append(f"lin {nm} {_num(self.h[r])} | {_row(self.G, r)}")
        order = np.argsort(self.group, kind="stable")
        starts = np.searchsorted(self.group[order], np.arange(self.n_lse + 1))
        for r, nm in enumerate(self.lse_names):
            out.append(f"lse {nm}")
            for t in order[starts[r]:starts[r + 1]]:
                out.append(f"  term {_num(self.g[t])} | {_row(self.F, t)}")
        out.append("end")
        return "\n".join(out) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ConeProgram":
        lines = text.splitlines()
        if not lines or lines[0].strip() != "spreadrisk-cone-program 1":
            raise ValueError("not a spreadrisk cone program dump")
        meta, blocks, names, lo, hi = {}, {}, [], [], []
        cdict = {}
        Grows, hvec, lin_names = [], [], []
        Frows, gvec, grp, lse_names = [], [], [], []
        for ln in lines[1:]:
            s = ln.strip()
            if not s or s == "end":
                continue
            head, _, rest = s.partition(" ")
            if head == "meta":
                k, _, val = rest.partition(" ")
                meta[k] = json.loads(val)
            elif head == "block":
                parts = rest.split()
                blocks[parts[0]] = (int(parts[1]), tuple(int(p) for p in parts[2:]))
            elif head == "var":
                idx, nm, a, b = rest.split()
                if int(idx) != len(names):
                    raise ValueError("variables must be listed in order")
                names.append(nm)
                lo.append(float(a))
                hi.append(float(b))
            elif head == "objective":
                cdict = _parse_row(rest)
            elif head == "lin":
                nm, _, tail = rest.partition(" ")
                rhs, _, coefs = tail.partition("|")
                lin_names.append(nm)
                hvec.append(float(rhs))
                Grows.append(_parse_row(coefs))
            elif head == "lse":
                lse_names.append(rest)
            elif head == "term":
                const, _, coefs = rest.partition("|")
                gvec.append(float(const))
                Frows.append(_parse_row(coefs))
                grp.append(len(lse_names) - 1)
            else:
                raise ValueError(f"unrecognised line: {ln!r}")
        nvar = len(names)
        c = np.zeros(nvar)
        for j, a in cdict.items():
            c[j] = a
        return cls(nvar=nvar, names=names, lo=np.array(lo), hi=np.array(hi), c=c,
                   G=_rows_to_csr(Grows, nvar), h=np.array(hvec, float), lin_names=lin_names,
                   F=_rows_to_csr(Frows, nvar), g=np.array(gvec, float),
                   group=np.array(grp, dtype=np.int64), lse_names=lse_names,
                   blocks=blocks, meta=meta)


def _num(a: float) -> str:
    if math.isinf(a):
        return "inf" if a > 0 else "-inf"
    return repr(float(a))


def _row(M, r) -> str:
    M = sp.csr_matrix(M)
    lo, hi = M.indptr[r], M.indptr[r + 1]
    return " ".join(f"{j}:{_num(a)}" for j, a in zip(M.indices[lo:hi], M.data[lo:hi]))


def _parse_row(s: str) -> dict:
    out = {}
    for tok in s.split():
        j, _, a = tok.partition(":")
        out[int(j)] = float(a)
    return out


def _rows_to_csr(rows, ncol) -> sp.csr_matrix:
    data, ind, ptr = [], [], [0]
    for row in rows:
        for j, a in sorted(row.items()):
            ind.append(j)
            data.append(a)
        ptr.append(len(ind))
    return sp.csr_matrix((np.array(data, float), np.array(ind, np.int64), np.array(ptr, np.int64)),
                         shape=(len(rows), ncol))


class _Builder:
    """Accumulates variables, linear rows and LSE terms in COO form."""

    def __init__(self):
        self.names, self.lo, self.hi = [], [], []
        self.blocks = {}
        self.lin = ([], [], [])  # row, col, val
        self.h, self.lin_names = [], []
        self.lse = ([], [], [])  # term, col, val
        self.g, self.group, self.lse_names = [], [], []

    def add_block(self, name, shape, lo, hi, labels):
        off = len(self.names)
        size = int(np.prod(shape))
        self.blocks[name] = (off, tuple(shape))
        self.names.extend(labels)
        self.lo.extend(np.broadcast_to(lo, shape).ravel().tolist())
        self.hi.extend(np.broadcast_to(hi, shape).ravel().tolist())
        return off + np.arange(size).reshape(shape)

    def add_rows(self, cols_per_row, vals_per_row, rhs, names):
        """Add linear ``<=`` rows given as parallel lists of index/value arrays."""
        r0 = len(self.h)
        for k, (cols, vals) in enumerate(zip(cols_per_row, vals_per_row)):
            cols = np.asarray(cols, np.int64).ravel()
            self.lin[0].append(np.full(len(cols), r0 + k))
            self.lin[1].append(cols)
            self.lin[2].append(np.broadcast_to(np.asarray(vals, float), cols.shape).ravel())
        self.h.extend(np.asarray(rhs, float).ravel().tolist())
        self.lin_names.extend(names)

    def add_terms(self, groups, consts, cols, vals):
        """Add LSE terms. ``cols``/``vals`` are (T, width) arrays; padding uses col -1."""
        t0 = len(self.g)
        T = len(consts)
        if T == 0:
            return
        cols = np.asarray(cols, np.int64)
        vals = np.asarray(vals, float)
        if cols.ndim != 2:
            cols, vals = cols.reshape(T, -1), vals.reshape(T, -1)
        tid = np.repeat(t0 + np.arange(T), cols.shape[1])
        keep = cols.ravel() >= 0
        self.lse[0].append(tid[keep])
        self.lse[1].append(cols.ravel()[keep])
        self.lse[2].append(vals.ravel()[keep])
        self.g.extend(np.asarray(consts, float).tolist())
        self.group.extend(np.asarray(groups, np.int64).tolist())

    def new_group(self, name) -> int:
        self.lse_names.append(name)
        return len(self.lse_names) - 1

    def new_groups(self, names) -> np.ndarray:
        r0 = len(self.lse_names)
        self.lse_names.extend(names)
        return r0 + np.arange(len(names))

    def finish(self, c_entries, meta) -> ConeProgram:
        nvar = len(self.names)
        c = np.zeros(nvar)
        for j, a in c_entries:
            c[j] += a

        def coo(parts, nrow):
            if parts[0]:
                r, cc, v = (np.concatenate(p) for p in parts)
            else:
                r = cc = np.zeros(0, np.int64)
                v = np.zeros(0)
            M = sp.csr_matrix((v, (r, cc)), shape=(nrow, nvar))
            M.sum_duplicates()
            return M

        return ConeProgram(
            nvar=nvar, names=self.names, lo=np.array(self.lo, float), hi=np.array(self.hi, float),
            c=c, G=coo(self.lin, len(self.h)), h=np.array(self.h, float), lin_names=self.lin_names,
            F=coo(self.lse, len(self.g)), g=np.array(self.g, float),
            group=np.array(self.group, np.int64), lse_names=self.lse_names,
            blocks=self.blocks, meta=meta)


def _check_inputs(net: SpreadingNetwork, params: StageParameters):
    if not params.h * net.delta_cap < 1:
        raise ValueError(f"h·delta_cap = {params.h * net.delta_cap:g} must be < 1")
    problems = validate(net, params)
    if problems:
        raise ValueError("invalid inputs: " + "; ".join(problems))


def price_envelope(net: SpreadingNetwork, params: StageParameters):
    """Log-price boxes ``(lo, hi)``, each K x n, that contain an optimal solution.

    The tightest certificate decreases entrywise as allocations grow, so the
    zero-allocation certificate bounds it from above and the full-allocation
    one from below. Replacing any feasible ``y`` by the tightest certificate of
    its allocation keeps it feasible and does not raise the objective, hence the
    boxes never cut off the optimum. They matter numerically: without them an
    interior-point method parks weakly constrained prices far above the
    certificate and the exponential terms span dozens of orders of magnitude.
    Falls back to ``±Y_BOX`` where an extreme allocation is unstable.
    """
    K = params.K

    def logs(beta, delta, fallback):
        A = build_state_matrix(net, beta, delta, params.h, check=False)
        try:
            p = backward_certificate([A] * K, net.cost, params.alpha)
        except UnstableError:
            return np.full((K, net.n), fallback)
        with np.errstate(divide="ignore"):
            return np.log(np.maximum(p, 0.0))

    hi = logs(net.beta_hi, net.delta_lo, Y_BOX) + ENVELOPE_MARGIN
    lo = logs(net.beta_lo, net.delta_hi, -Y_BOX) - ENVELOPE_MARGIN
    lo = np.clip(lo, -Y_BOX, Y_BOX - 1.0)
    hi = np.clip(hi, lo + 1.0, Y_BOX)
    return lo, hi


def _build_dynamic_core(net: SpreadingNetwork, params: StageParameters, weights=None, allowed=None):
    """Variables, dynamic-coupling LSE rows, allocation bounds and budgets.

    Allocations are carried as cumulative amounts ``U[k] = u^1 + ... + u^k``
    (likewise ``V``) so that every LSE term touches at most three variables;
    per-stage amounts are the nonnegative differences ``U[k] - U[k-1]``.
    ``allowed = (edge_mask, node_mask)`` pins every other entry to zero.
    """
    K, n, m = params.K, net.n, net.m
    h, alpha, Dcap = params.h, params.alpha, net.delta_cap
    ids = net.node_ids
    b = _Builder()

    edge_ok = max_edge_resource(net) > 0
    node_ok = max_node_resource(net) > 0
    if allowed is not None:
        edge_ok &= np.asarray(allowed[0], bool)
        node_ok &= np.asarray(allowed[1], bool)
    edge_alloc = np.flatnonzero(edge_ok)
    node_alloc = np.flatnonzero(node_ok)
    ma, na = len(edge_alloc), len(node_alloc)
    umax = max_edge_resource(net)[edge_alloc]
    vmax = max_node_resource(net)[node_alloc]

    ylo, yhi = price_envelope(net, params)
    Y = b.add_block("y", (K, n), ylo, yhi,
                    [f"y[{k + 1},{ids[i]}]" for k in range(K) for i in range(n)])
    U = b.add_block("U", (K, ma), 0.0, np.broadcast_to(umax, (K, ma)),
                    [f"U[{k + 1},{ids[net.src[e]]}->{ids[net.dst[e]]}]" for k in range(K) for e in edge_alloc])
    V = b.add_block("V", (K, na), 0.0, np.broadcast_to(vmax, (K, na)),
                    [f"V[{k + 1},{ids[i]}]" for k in range(K) for i in node_alloc])

    # column of each edge/node within the allocatable blocks (-1 when fixed)
    ecol = np.full(m, -1)
    ecol[edge_alloc] = np.arange(ma)
    ncol = np.full(n, -1)
    ncol[node_alloc] = np.arange(na)

    log_edge = np.log(alpha * h * net.beta_hi)
    log_b = math.log(alpha * (1.0 - h * Dcap))
    log_c = np.log(alpha * h * (Dcap - net.delta_lo))
    pos_cost = net.cost > 0
    log_cost = np.log(np.where(pos_cost, net.cost, 1.0))
    src, dst = net.src, net.dst
    has_u = ecol >= 0
    has_v = ncol >= 0
    j = np.arange(n)

    for k in range(K):
        nxt = min(k + 1, K - 1)
        groups = b.new_groups([f"dyn[{k + 1},{ids[jj]}]" for jj in range(n)])
        # (a) one term per out-edge j -> i of the constrained node j
        cols = np.full((m, 3), -1)
        vals = np.zeros((m, 3))
        cols[:, 0], vals[:, 0] = Y[nxt, dst], 1.0
        cols[:, 1], vals[:, 1] = Y[k, src], -1.0
        cols[has_u, 2] = U[k, ecol[has_u]]
        vals[has_u, 2] = -1.0 / net.w_edge[has_u]
        b.add_terms(groups[src], log_edge, cols, vals)

        # (b) recovery headroom below the cap, (c) gap between cap and achieved rate;
        # at the stationary stage the price differences cancel
        dcols = np.stack([Y[nxt, j], Y[k, j]], axis=1) if nxt != k else np.full((n, 0), -1)
        dvals = np.tile([1.0, -1.0], (n, 1)) if nxt != k else np.zeros((n, 0))
        b.add_terms(groups, np.full(n, log_b), dcols, dvals)
        cols = np.concatenate([dcols, np.full((n, 1), -1)], axis=1)
        vals = np.concatenate([dvals, np.zeros((n, 1))], axis=1)
        cols[has_v, -1] = V[k, ncol[has_v]]
        vals[has_v, -1] = -1.0 / net.w_node[has_v]
        b.add_terms(groups, log_c, cols, vals)
        # (d) stage cost, dropped when c_j = 0
        jj = np.flatnonzero(pos_cost)
        b.add_terms(groups[jj], log_cost[jj], Y[k, jj][:, None], -np.ones((len(jj), 1)))

    # cumulative amounts never decrease: U[k-1] - U[k] <= 0
    for blk, cnt, label in ((U, ma, "umono"), (V, na, "vmono")):
        if K > 1 and cnt:
            prev, cur = blk[:-1].ravel(), blk[1:].ravel()
            b.add_rows(np.stack([prev, cur], axis=1), [[1.0, -1.0]] * len(prev), np.zeros(len(prev)),
                       [f"{label}[{b.names[c]}]" for c in cur])

    # allocation weights for reweighted budgets/objectives
    wu = np.ones((K, ma)) if weights is None else np.asarray(weights[0], float)[:, edge_alloc]
    wv = np.ones((K, na)) if weights is None else np.asarray(weights[1], float)[:, node_alloc]
    layout = dict(edge_alloc=edge_alloc, node_alloc=node_alloc, Y=Y, U=U, V=V, wu=wu, wv=wv)
    return b, layout


def _stage_terms(L, k, weighted=False):
    """Columns and coefficients of ``sum(u^k) + sum(v^k)`` in cumulative variables."""
    cols, vals = [], []
    for blk, w in ((L["U"], L["wu"]), (L["V"], L["wv"])):
        coef = w[k] if weighted else np.ones(blk.shape[1])
        cols.append(blk[k])
        vals.append(coef)
        if k > 0:
            cols.append(blk[k - 1])
            vals.append(-coef)
    return np.concatenate(cols), np.concatenate(vals)


def _add_budgets(b: _Builder, params: StageParameters, L, stage=True, total=True):
    K = params.K
    if stage and params.gamma_stage is not None:
        for k in range(K):
            g = params.gamma_stage[k]
            if g is not None:
                cols, vals = _stage_terms(L, k)
                b.add_rows([cols], [vals], [g], [f"budget[{k + 1}]"])
    if total and params.gamma_total is not None:
        cols = np.concatenate([L["U"][K - 1], L["V"][K - 1]])
        b.add_rows([cols], [1.0], [params.gamma_total], ["budget[total]"])


def _weighted_allocation(L, K, weighted=True):
    """``(column, coefficient)`` pairs of ``sum_k w^k (u^k, v^k)``."""
    acc = {}
    for k in range(K):
        cols, vals = _stage_terms(L, k, weighted=weighted)
        for c, a in zip(cols.tolist(), vals.tolist()):
            acc[c] = acc.get(c, 0.0) + a
    return list(acc.items())


def _add_cap(b: _Builder, L, cap, K):
    pairs = _weighted_allocation(L, K)
    # row scaled to unit largest coefficient
    scale = max([abs(a) for _, a in pairs], default=1.0) or 1.0
    b.add_rows([[c for c, _ in pairs]], [[a / scale for _, a in pairs]], [cap / scale], ["cardinality_cap"])


def _meta(kind, net, params, L, **extra):
    meta = {"problem": kind, "K": params.K, "n": net.n, "m": net.m, "h": params.h,
            "alpha": params.alpha, "edge_alloc": L["edge_alloc"].tolist(),
            "node_alloc": L["node_alloc"].tolist()}
    meta.update(extra)
    return meta


def build_problem1(net: SpreadingNetwork, params: StageParameters, mode: str = "max",
                   weights=None, cap: Optional[float] = None, allowed=None) -> ConeProgram:
    """Minimise the (log) maximum or summed risk under stage and total budgets.

    ``mode="max"`` minimises ``s`` with ``s >= log x_hat_i + y_i^1``;
    ``mode="sum"`` minimises ``s >= log sum_i exp(log x_hat_i + y_i^1)``.
    ``weights``/``cap`` add a weighted allocation cap ``sum w*(u, v) <= cap``;
    ``weights`` has the shapes ``(K, m)`` and ``(K, n)``.
    """
    if mode not in ("max", "sum"):
        raise ValueError(f"unknown objective mode {mode!r}")
    _check_inputs(net, params)
    at_risk = np.flatnonzero(net.x_hat > 0)
    if not len(at_risk):
        raise ValueError("no node has a positive outbreak probability; risk is identically zero")
    b, L = _build_dynamic_core(net, params, weights, allowed)
    S = b.add_block("s", (1,), -np.inf, np.inf, ["s"])[0]
    Y = L["Y"]
    lx = np.log(net.x_hat[at_risk])
    ids = net.node_ids
    if mode == "max":
        b.add_rows([[Y[0, i], S] for i in at_risk], [[1.0, -1.0]] * len(at_risk), -lx,
                   [f"risk[{ids[i]}]" for i in at_risk])
    else:
        grp = b.new_group("risk_sum")
        cols = np.stack([Y[0, at_risk], np.full(len(at_risk), S)], axis=1)
        vals = np.tile([1.0, -1.0], (len(at_risk), 1))
        b.add_terms(np.full(len(at_risk), grp), lx, cols, vals)
    _add_budgets(b, params, L)
    if cap is not None:
        _add_cap(b, L, cap, params.K)
    return b.finish([(S, 1.0)], _meta("P1", net, params, L, mode=mode))


def build_problem2(net: SpreadingNetwork, params: StageParameters, gamma: float,
                   weights=None, cap: Optional[float] = None, stage_budgets: bool = True,
                   weighted_objective: bool = True, allowed=None) -> ConeProgram:
    """Minimise (weighted) total allocation subject to ``p^1_i x_hat_i <= gamma`` for all i.

    With ``weighted_objective=False`` the weights only enter the cap row.
    """
    if not gamma > 0:
        raise ValueError("risk cap gamma must be > 0")
    _check_inputs(net, params)
    b, L = _build_dynamic_core(net, params, weights, allowed)
    Y = L["Y"]
    ids = net.node_ids
    if math.isfinite(gamma):
        at_risk = np.flatnonzero(net.x_hat > 0)
        b.add_rows([[Y[0, i]] for i in at_risk], [[1.0]] * len(at_risk),
                   math.log(gamma) - np.log(net.x_hat[at_risk]), [f"riskcap[{ids[i]}]" for i in at_risk])
    _add_budgets(b, params, L, stage=stage_budgets)
    if cap is not None:
        _add_cap(b, L, cap, params.K)
    obj = _weighted_allocation(L, params.K, weighted_objective)
    gm = gamma if math.isfinite(gamma) else None
    return b.finish(obj, _meta("P2", net, params, L, gamma=gm))


def unpack(program: ConeProgram, x, net: SpreadingNetwork):
    """Split a primal vector into ``(y, u, v)`` with per-stage ``u`` (K x m) and ``v`` (K x n)."""
    K = program.meta["K"]
    y = program.block(x, "y")
    u = np.zeros((K, net.m))
    v = np.zeros((K, net.n))
    u[:, program.meta["edge_alloc"]] = np.diff(program.block(x, "U"), axis=0, prepend=0.0)
    v[:, program.meta["node_alloc"]] = np.diff(program.block(x, "V"), axis=0, prepend=0.0)
    return y, np.maximum(u, 0.0), np.maximum(v, 0.0)
