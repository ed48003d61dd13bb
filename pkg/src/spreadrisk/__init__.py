"""Multi-stage sparse resource allocation bounding the risk of spreading processes."""
from .certificate import (RiskCertificate, RiskReport, UnstableError, risk_report, rollout_cost,
                          tightest_stationary_certificate, verify_certificate)
from .conic import (ConeProgram, Plan, SolutionRejected, SolveOptions, SolverResult, build_problem1,
                    build_problem2, extract_solution, solve)
from .dynamics import build_state_matrix, simulate_stochastic, step_linear, step_nonlinear
from .network import SpreadingNetwork, StageParameters, validate
from .planning import SolveFailed, minimize_resources, plan_risk
from .resources import AllocationSchedule, beta_from_allocation, budget_usage, delta_from_allocation, stage_bounds
from .sparsify import reweighted_solve

__all__ = [
    "AllocationSchedule", "ConeProgram", "Plan", "RiskCertificate", "RiskReport", "SolutionRejected",
    "SolveFailed", "SolveOptions", "SolverResult", "SpreadingNetwork", "StageParameters", "UnstableError",
    "beta_from_allocation", "budget_usage", "build_problem1", "build_problem2", "build_state_matrix",
    "delta_from_allocation", "extract_solution", "minimize_resources", "plan_risk", "reweighted_solve",
    "risk_report", "rollout_cost", "simulate_stochastic", "solve", "stage_bounds", "step_linear",
    "step_nonlinear", "tightest_stationary_certificate", "validate", "verify_certificate",
]
