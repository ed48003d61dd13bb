"""One-call planning: build, solve, back-transform and re-verify."""
from __future__ import annotations

import time
from typing import Optional

import numpy as np

from .conic import (Plan, SolveOptions, SolverResult, build_problem1, build_problem2,
                    extract_solution, solve)
from .conic.program import ConeProgram
from .network import SpreadingNetwork, StageParameters


class SolveFailed(RuntimeError):
    """The solver did not return an optimal point; ``status`` says why."""

    def __init__(self, status: str, result: Optional[SolverResult] = None, message: str = ""):
        super().__init__(message or f"solver finished with status {status!r}")
        self.status = status
        self.result = result


def solve_program(program: ConeProgram, net: SpreadingNetwork, params: StageParameters,
                  options: Optional[SolveOptions] = None, backend: Optional[str] = None) -> Plan:
    result = solve(program, options, backend)
    if not result.optimal:
        raise SolveFailed(result.status, result)
    return extract_solution(program, result, net, params)


def plan_risk(net: SpreadingNetwork, params: StageParameters, mode: str = "max",
              options: Optional[SolveOptions] = None, backend: Optional[str] = None, **build) -> Plan:
    """Minimise the certified maximum (or summed) risk under the budgets."""
    return solve_program(build_problem1(net, params, mode=mode, **build), net, params, options, backend)


def minimize_resources(net: SpreadingNetwork, params: StageParameters, gamma: float,
                       options: Optional[SolveOptions] = None, backend: Optional[str] = None,
                       **build) -> Plan:
    """Least total allocation that certifies ``max_i p_i x_hat_i <= gamma``."""
    return solve_program(build_problem2(net, params, gamma, **build), net, params, options, backend)


def linear_fit(x, y):
    """Least-squares line through ``(x, y)``: ``(slope, intercept, r2)``."""
    from scipy.stats import linregress

    fit = linregress(np.asarray(x, float), np.asarray(y, float))
    return float(fit.slope), float(fit.intercept), float(fit.rvalue ** 2)


def bench_stages(net: SpreadingNetwork, params_for_K, Ks, mode: str = "max",
                 options: Optional[SolveOptions] = None, backend: Optional[str] = None):
    """Solve Problem 1 for every K in ``Ks``; rows of ``(K, seconds, status, iterations)``.

    ``params_for_K(K)`` returns the stage parameters for K stages. The time
    covers building and solving the program.
    """
    rows = []
    for K in Ks:
        t0 = time.perf_counter()
        result = solve(build_problem1(net, params_for_K(K), mode=mode), options, backend)
        rows.append((int(K), time.perf_counter() - t0, result.status, result.iterations))
    return rows
