"""Reweighted l1 iteration for sparser allocation schedules.

Every iterate re-solves the base problem with allocation weights
``1 / (u^{q-1} + eps)`` taken per (stage, entry) from the previous iterate,
so the weighted allocation approximates the number of nonzero entries. The
weights enter either the objective (resource minimisation) or a cap row
``phi <= M``. No convergence guarantee exists; the full history is returned.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .conic import Plan, SolveOptions, SolutionRejected, build_problem1, build_problem2
from .network import SpreadingNetwork, StageParameters
from .planning import SolveFailed, solve_program

EPS = 1e-4
Q_MAX = 10
TAU = 1e-6
#: relative slack on the P1-achieved risk when it becomes the cap of later iterates
GAMMA_SLACK = 1e-6
#: relative tolerance of the per-iterate risk-cap and cardinality-cap re-checks
CHECK_RTOL = 1e-6


class SparsifyWarning(UserWarning):
    pass


@dataclass
class Iteration:
    q: int
    status: str
    objective: float = math.nan
    nonzeros_u: int = 0
    nonzeros_v: int = 0
    max_risk: float = math.nan
    phi: float = math.nan
    feasible: bool = False


@dataclass
class SparsifyResult:
    plan: Plan
    history: list
    converged: bool
    polished: bool = False
    warnings: list = field(default_factory=list)
    tau: float = TAU

    @property
    def nonzeros(self):
        return self.plan.schedule.nonzeros(self.tau)

    def log_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["q", "objective", "nonzeros_u", "nonzeros_v", "max_risk"])
        for it in self.history:
            wr.writerow([it.q, repr(float(it.objective)), it.nonzeros_u, it.nonzeros_v,
                         repr(float(it.max_risk))])
        return buf.getvalue()


def reweight(u, v, eps: float = EPS):
    """Weights ``1 / (u + eps)`` and ``1 / (v + eps)``."""
    if not eps > 0:
        raise ValueError("eps must be > 0")
    return 1.0 / (np.asarray(u) + eps), 1.0 / (np.asarray(v) + eps)


def weighted_allocation(plan: Plan, weights) -> float:
    s = plan.schedule
    if weights is None:
        return float(s.u.sum() + s.v.sum())
    return float((weights[0] * s.u).sum() + (weights[1] * s.v).sum())


def reweighted_solve(net: SpreadingNetwork, params: StageParameters, problem: str = "P2",
                     gamma: Optional[float] = None, mode: str = "objective", cap: Optional[float] = None,
                     objective_mode: str = "max", eps: float = EPS, q_max: int = Q_MAX, tau: float = TAU,
                     polish: bool = False, options: Optional[SolveOptions] = None,
                     backend: Optional[str] = None) -> SparsifyResult:
    """Drive the number of nonzero allocations down by iterative reweighting.

    ``problem="P2"`` needs the risk cap ``gamma``. In ``mode="objective"`` the
    weighted allocation is minimised (for ``P1`` the first, plain solve fixes
    the risk level and later iterates minimise the weighted allocation at that
    risk); in ``mode="cap"`` the base objective is kept and ``phi <= cap`` is
    imposed. Stops when the support (entries above ``tau``) repeats or at
    ``q_max``. A failing iterate ends the loop with a warning and the last
    feasible iterate is returned.
    """
    if problem not in ("P1", "P2"):
        raise ValueError(f"unknown base problem {problem!r}")
    if mode not in ("objective", "cap"):
        raise ValueError(f"unknown sparsify mode {mode!r}")
    if mode == "cap" and (cap is None or cap < 0):
        raise ValueError("cap mode needs a cap M >= 0")
    if problem == "P2" and gamma is None:
        raise ValueError("P2 needs a risk cap gamma")
    if problem == "P1" and mode == "objective" and objective_mode != "max":
        raise ValueError("P1 in objective mode keeps the maximum-risk level; use objective_mode='max'")
    if q_max < 1:
        raise ValueError("q_max must be >= 1")
    if not eps > 0:
        raise ValueError("eps must be > 0")

    risk_cap = gamma if problem == "P2" else None

    def build(weights, allowed=None, plain=False):
        w = None if plain else weights
        if w is not None:
            # a common positive scale leaves the minimiser and the cap set unchanged
            # but keeps the coefficients near one, which the solver needs
            top = max(float(w[0].max(initial=0.0)), float(w[1].max(initial=0.0)))
            if mode == "objective":
                w = (w[0] / top, w[1] / top)
        c = None if plain else cap
        if problem == "P1" and (mode == "cap" or risk_cap is None):
            return build_problem1(net, params, mode=objective_mode, weights=w,
                                  cap=c if mode == "cap" else None, allowed=allowed)
        return build_problem2(net, params, risk_cap, weights=w, cap=c if mode == "cap" else None,
                              weighted_objective=(mode == "objective" and not plain), allowed=allowed)

    def base_objective(plan):
        if problem == "P1" and mode == "cap":
            return plan.report.max_risk if objective_mode == "max" else plan.report.sum_risk
        if problem == "P1" and risk_cap is None:
            return plan.report.max_risk
        return plan.usage.total

    feas_tol = (options or SolveOptions()).feas_tol

    def feasible(plan, weights):
        if risk_cap is not None and plan.report.max_risk > risk_cap * (1 + CHECK_RTOL):
            return False
        if mode == "cap":
            # every entry may sit feas_tol outside its bound, and phi weighs that by w
            wsum = plan.schedule.u.size + plan.schedule.v.size if weights is None else \
                float(weights[0].sum() + weights[1].sum())
            if weighted_allocation(plan, weights) > cap * (1 + CHECK_RTOL) + feas_tol * wsum:
                return False
        return True

    history, notes = [], []
    best: Optional[Plan] = None
    weights = None
    support = None
    converged = False
    for q in range(1, q_max + 1):
        try:
            plan = solve_program(build(weights), net, params, options, backend)
            status = "optimal"
        except (SolveFailed, SolutionRejected) as exc:
            plan, status = None, getattr(exc, "status", "rejected")
        if plan is None or not feasible(plan, weights):
            history.append(Iteration(q, status if plan is None else "cap-violated"))
            if best is None:
                raise SolveFailed(status if plan is None else "numerical",
                                  message=f"plain l1 solve failed at q=1 ({status})")
            msg = f"iterate q={q} failed ({history[-1].status}); returning iterate q={q - 1}"
            notes.append(msg)
            warnings.warn(msg, SparsifyWarning, stacklevel=2)
            break
        nu, nv = plan.schedule.nonzeros(tau)
        history.append(Iteration(q, status, base_objective(plan), nu, nv, plan.report.max_risk,
                                 weighted_allocation(plan, weights), True))
        best = plan
        if problem == "P1" and mode == "objective" and risk_cap is None:
            risk_cap = plan.report.max_risk * (1 + GAMMA_SLACK)
        new_support = (plan.schedule.u > tau, plan.schedule.v > tau)
        if support is not None and all(np.array_equal(a, b) for a, b in zip(support, new_support)):
            converged = True
            break
        support = new_support
        weights = reweight(plan.schedule.u, plan.schedule.v, eps)

    polished = False
    if polish:
        allowed = (best.schedule.u.max(axis=0) > tau, best.schedule.v.max(axis=0) > tau)
        try:
            cand = solve_program(build(None, allowed, plain=True), net, params, options, backend)
            if risk_cap is None or cand.report.max_risk <= risk_cap * (1 + CHECK_RTOL):
                best, polished = cand, True
        except (SolveFailed, SolutionRejected) as exc:
            msg = f"polish step failed ({getattr(exc, 'status', 'rejected')}); keeping the reweighted iterate"
            notes.append(msg)
            warnings.warn(msg, SparsifyWarning, stacklevel=2)
    return SparsifyResult(plan=best, history=history, converged=converged, polished=polished,
                          warnings=notes, tau=tau)
