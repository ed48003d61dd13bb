from .backends import SolveOptions, SolverResult, solve, to_exp_cone_form
from .program import ConeProgram, build_problem1, build_problem2, unpack
from .solution import Plan, SolutionRejected, extract_solution

__all__ = [
    "ConeProgram", "Plan", "SolutionRejected", "SolveOptions", "SolverResult",
    "build_problem1", "build_problem2", "extract_solution", "solve", "to_exp_cone_form", "unpack",
]
