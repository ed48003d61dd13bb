"""Solver backends for :class:`~spreadrisk.conic.program.ConeProgram`.

``clarabel`` (default) decomposes every log-sum-exp row into exponential
cones ``t_m >= exp(F_m x + g_m)``, ``sum_m t_m <= 1`` and calls the Clarabel
interior-point solver directly. ``cvxpy`` hands the native ``log_sum_exp``
atoms to cvxpy, whose own canonicalisation is independent of ours.

The backend is chosen per call, or through the ``SPREADRISK_BACKEND``
environment variable.
"""
from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .program import ConeProgram

BACKEND_ENV = "SPREADRISK_BACKEND"


@dataclass
class SolveOptions:
    feas_tol: float = 1e-8
    rel_gap: float = 1e-6
    max_iters: int = 500
    verbose: bool = False


@dataclass
class SolverResult:
    status: str  # optimal | infeasible | max-iter | numerical
    objective: float
    x: Optional[np.ndarray]
    max_violation: float
    wall_time: float
    iterations: int = 0
    backend: str = ""
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


@dataclass
class ExpConeForm:
    """``min c@z  s.t.  A z + s = b``, ``s`` in ``R+^n_lin x K_exp^n_exp``; ``z = [x; t]``."""

    c: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    n_lin: int
    n_exp: int
    nvar: int


def _reduce_terms(prog: ConeProgram):
    """Exact simplification of the LSE rows before conic decomposition.

    Terms of one row that share the same linear part are merged into a single
    term (their constants combine through log-sum-exp), and constant terms are
    moved to the right-hand side: ``sum exp(a_m) + kappa <= 1`` becomes
    ``sum exp(a_m - log(1 - kappa)) <= 1``. Returns ``(F, g, group)`` or raises
    when some row's constants alone already reach 1.
    """
    F = prog.F.tocsr()
    F.sort_indices()
    T = F.shape[0]
    index = {}
    slot = np.empty(T, np.int64)
    for t in range(T):
        lo, hi = F.indptr[t], F.indptr[t + 1]
        key = (int(prog.group[t]), F.indices[lo:hi].tobytes(), F.data[lo:hi].tobytes())
        slot[t] = index.setdefault(key, len(index))
    R = len(index)
    first = np.full(R, T)
    np.minimum.at(first, slot, np.arange(T))
    gmax = np.full(R, -np.inf)
    np.maximum.at(gmax, slot, prog.g)
    acc = np.zeros(R)
    np.add.at(acc, slot, np.exp(prog.g - gmax[slot]))
    g = gmax + np.log(acc)
    F, group = F[first], prog.group[first]
    const = np.diff(F.indptr) == 0
    kappa = np.zeros(prog.n_lse)
    np.add.at(kappa, group[const], np.exp(g[const]))
    if np.any(kappa >= 1.0):
        bad = int(np.flatnonzero(kappa >= 1.0)[0])
        raise _ConstantInfeasible(prog.lse_names[bad])
    keep = ~const
    return F[keep], g[keep] - np.log1p(-kappa[group[keep]]), group[keep]


class _ConstantInfeasible(Exception):
    pass


def to_exp_cone_form(prog: ConeProgram) -> ExpConeForm:
    """Decompose ``prog`` into nonnegative and exponential cones."""
    nvar = prog.nvar
    Fr, gr, grp = _reduce_terms(prog)
    counts = np.bincount(grp, minlength=prog.n_lse)
    single = counts[grp] == 1
    multi = np.flatnonzero(~single)
    T = len(multi)
    N = nvar + T
    tcol = nvar + np.arange(T)

    blocks_A, blocks_b = [], []
    eye = sp.identity(nvar, format="csr")
    fin_hi = np.flatnonzero(np.isfinite(prog.hi))
    fin_lo = np.flatnonzero(np.isfinite(prog.lo))
    pad = lambda M: sp.hstack([M, sp.csr_matrix((M.shape[0], T))], format="csr")  # noqa: E731
    blocks_A += [pad(eye[fin_hi]), pad(-eye[fin_lo]), pad(prog.G)]
    blocks_b += [prog.hi[fin_hi], -prog.lo[fin_lo], prog.h]
    # single-term groups are plain affine rows
    srows = np.flatnonzero(single)
    blocks_A.append(pad(Fr[srows]))
    blocks_b.append(-gr[srows])
    # sum of auxiliaries per multi-term group
    gids = grp[multi]
    ug, ginv = np.unique(gids, return_inverse=True)
    S = sp.csr_matrix((np.ones(T), (ginv, tcol)), shape=(len(ug), N))
    blocks_A.append(S)
    blocks_b.append(np.ones(len(ug)))
    A_lin = sp.vstack(blocks_A, format="csr")
    b_lin = np.concatenate(blocks_b)
    n_lin = A_lin.shape[0]

    # exp-cone triples (F x + g, 1, t): rows 3r, 3r+1, 3r+2
    Fm = Fr[multi].tocoo()
    rows = np.concatenate([3 * Fm.row, 3 * np.arange(T) + 2])
    cols = np.concatenate([Fm.col, tcol])
    vals = np.concatenate([-Fm.data, -np.ones(T)])
    A_exp = sp.csr_matrix((vals, (rows, cols)), shape=(3 * T, N))
    b_exp = np.zeros(3 * T)
    b_exp[0::3] = gr[multi]
    b_exp[1::3] = 1.0

    A = sp.vstack([A_lin, A_exp], format="csc")
    c = np.concatenate([prog.c, np.zeros(T)])
    return ExpConeForm(c=c, A=A, b=np.concatenate([b_lin, b_exp]), n_lin=n_lin, n_exp=T, nvar=nvar)


_CLARABEL_STATUS = {
    "Solved": "optimal",
    "AlmostSolved": "numerical",
    "PrimalInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
    "DualInfeasible": "numerical",
    "AlmostDualInfeasible": "numerical",
    "MaxIterations": "max-iter",
    "MaxTime": "max-iter",
    "NumericalError": "numerical",
    "InsufficientProgress": "numerical",
}


def _finish(prog, x, status, backend, t0, iterations=0, info=None, opts=None):
    wall = time.perf_counter() - t0
    if x is None or not np.all(np.isfinite(x)):
        return SolverResult(status if status != "optimal" else "numerical", float("nan"), None,
                            float("inf"), wall, iterations, backend, info or {})
    viol = prog.violation(x)
    info = dict(info or {})
    if status == "optimal" and opts is not None and viol > opts.feas_tol:
        info["reason"] = f"backend reported optimal but max violation {viol:.3g} > {opts.feas_tol:g}"
        status = "numerical"
    return SolverResult(status, prog.objective(x), x, viol, wall, iterations, backend, info)


#: settings tried in order. The first two trade speed for robustness (shorter
#: steps, gentler line search, no dynamic regularisation), which the wildfire
#: programs need; the faer factorisation holds accuracy further into the
#: endgame on large grids. The stock settings are the last resort.
_ROBUST = {"linesearch_backtrack_step": 0.5, "min_switch_step_length": 0.01,
           "min_terminate_step_length": 1e-6, "dynamic_regularization_enable": False}
CLARABEL_PROFILES = (
    dict(_ROBUST, max_step_fraction=0.85, direct_solve_method="faer"),
    dict(_ROBUST, max_step_fraction=0.7),
    {},
)


def _clarabel_attempt(form, opts, profile):
    import clarabel

    N = len(form.c)
    cones = []
    if form.n_lin:
        cones.append(clarabel.NonnegativeConeT(form.n_lin))
    cones.extend(clarabel.ExponentialConeT() for _ in range(form.n_exp))
    st = clarabel.DefaultSettings()
    st.verbose = opts.verbose
    st.max_iter = opts.max_iters
    # feasibility tighter than the contract so the independent re-check has headroom;
    # an absolute gap below rel_gap implies the relative measure used here
    st.tol_feas = opts.feas_tol * 0.1
    st.tol_gap_abs = opts.rel_gap
    st.tol_gap_rel = opts.rel_gap
    st.tol_infeas_abs = 1e-8
    st.tol_infeas_rel = 1e-8
    for key, val in profile.items():
        setattr(st, key, val)
    return clarabel.DefaultSolver(sp.csc_matrix((N, N)), form.c, form.A, form.b, cones, st).solve()


def solve_clarabel(prog: ConeProgram, opts: SolveOptions) -> SolverResult:
    t0 = time.perf_counter()
    try:
        form = to_exp_cone_form(prog)
    except _ConstantInfeasible as exc:
        return _finish(prog, None, "infeasible", "clarabel", t0,
                       info={"reason": f"constant terms of {exc.args[0]} alone exceed 1"})
    iterations, attempts = 0, []
    best = None
    for i, profile in enumerate(CLARABEL_PROFILES):
        sol = _clarabel_attempt(form, opts, profile)
        iterations += sol.iterations
        raw = str(sol.status)
        status = _CLARABEL_STATUS.get(raw, "numerical")
        x = np.asarray(sol.x[:prog.nvar]) if status in ("optimal", "numerical", "max-iter") else None
        info = {"backend_status": raw, "profile": i, "r_prim": sol.r_prim, "r_dual": sol.r_dual,
                "obj_dual": sol.obj_val_dual, "exp_cones": form.n_exp}
        if x is not None and np.all(np.isfinite(x)):
            gap = abs(sol.obj_val - sol.obj_val_dual) / max(1.0, abs(sol.obj_val))
            info["rel_gap"] = gap
            # reduced-accuracy termination still meets the contract when both measures pass
            ok = gap <= opts.rel_gap and prog.violation(x) <= opts.feas_tol
            status = "optimal" if (raw in ("Solved", "AlmostSolved") and ok) else (
                "numerical" if status == "optimal" else status)
        attempts.append(raw)
        if status in ("optimal", "infeasible"):
            best = (x, status, info)
            break
        if best is None or info.get("rel_gap", np.inf) < best[2].get("rel_gap", np.inf):
            best = (x, status, info)
    x, status, info = best
    info["attempts"] = attempts
    return _finish(prog, x, status, "clarabel", t0, iterations, info, opts)


def solve_cvxpy(prog: ConeProgram, opts: SolveOptions, solver: Optional[str] = None) -> SolverResult:
    import cvxpy as cp

    t0 = time.perf_counter()
    x = cp.Variable(prog.nvar)
    cons = []
    fin_hi = np.flatnonzero(np.isfinite(prog.hi))
    fin_lo = np.flatnonzero(np.isfinite(prog.lo))
    if len(fin_hi):
        cons.append(x[fin_hi] <= prog.hi[fin_hi])
    if len(fin_lo):
        cons.append(x[fin_lo] >= prog.lo[fin_lo])
    if prog.n_lin:
        cons.append(prog.G @ x <= prog.h)
    order = np.argsort(prog.group, kind="stable")
    starts = np.searchsorted(prog.group[order], np.arange(prog.n_lse + 1))
    for r in range(prog.n_lse):
        idx = order[starts[r]:starts[r + 1]]
        aff = prog.F[idx] @ x + prog.g[idx]
        cons.append((aff <= 0) if len(idx) == 1 else (cp.log_sum_exp(aff) <= 0))
    problem = cp.Problem(cp.Minimize(prog.c @ x), cons)
    solver = solver or "CLARABEL"
    kwargs = {}
    if solver == "CLARABEL":
        kwargs = dict(tol_feas=opts.feas_tol * 0.1, tol_gap_abs=opts.feas_tol * 0.1,
                      tol_gap_rel=opts.rel_gap * 0.01, max_iter=opts.max_iters)
    elif solver == "SCS":
        kwargs = dict(eps_abs=opts.feas_tol, eps_rel=opts.feas_tol, max_iters=100_000)
    try:
        problem.solve(solver=solver, verbose=opts.verbose, **kwargs)
    except cp.error.SolverError as exc:
        return SolverResult("numerical", float("nan"), None, float("inf"),
                            time.perf_counter() - t0, 0, "cvxpy", {"error": str(exc)})
    st = problem.status
    status = {"optimal": "optimal", "infeasible": "infeasible", "optimal_inaccurate": "numerical",
              "infeasible_inaccurate": "infeasible", "unbounded": "numerical",
              "user_limit": "max-iter"}.get(st, "numerical")
    xv = None if x.value is None else np.asarray(x.value, float)
    iters = problem.solver_stats.num_iters if problem.solver_stats else 0
    return _finish(prog, xv, status, f"cvxpy/{solver}", t0, iters or 0, {"backend_status": st}, opts)


BACKENDS = {"clarabel": solve_clarabel, "cvxpy": solve_cvxpy}


def solve(prog: ConeProgram, options: Optional[SolveOptions] = None, backend: Optional[str] = None) -> SolverResult:
    """Solve ``prog``; ``status == "optimal"`` guarantees ``max_violation <= feas_tol``."""
    opts = options or SolveOptions()
    name = (backend or os.environ.get(BACKEND_ENV) or "clarabel").lower()
    try:
        fn = BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown backend {name!r}; choose from {sorted(BACKENDS)}") from None
    return fn(prog, opts)
