"""Back-transformation of solver output into schedules and certificates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..certificate import (DEFAULT_TOL, CertificateCheck, RiskCertificate, RiskReport, UnstableError,
                           backward_certificate, risk_report, schedule_matrices)
from ..network import SpreadingNetwork, StageParameters
from ..resources import DUST, AllocationSchedule, BudgetUsage, budget_usage
from .backends import SolverResult
from .program import ConeProgram, unpack


class SolutionRejected(RuntimeError):
    """The back-transformed solution failed independent re-verification."""


@dataclass
class Plan:
    schedule: AllocationSchedule
    certificate: RiskCertificate
    report: RiskReport
    check: CertificateCheck
    usage: BudgetUsage
    result: SolverResult
    #: True when the solver's prices failed re-verification and the tightest
    #: certificate of the returned schedule was used instead
    recomputed: bool = False

    @property
    def max_risk(self) -> float:
        return self.report.max_risk


def extract_solution(program: ConeProgram, result: SolverResult, net: SpreadingNetwork,
                     params: StageParameters, tol: float = DEFAULT_TOL,
                     budget_tol: float = 1e-6) -> Plan:
    """Exponentiate log-prices, rebuild the stage matrices and re-verify everything."""
    if not result.optimal:
        raise ValueError(f"cannot extract a solution with status {result.status!r}")
    y, u, v = unpack(program, result.x, net)
    schedule = AllocationSchedule(net, np.where(u < DUST, 0.0, u), np.where(v < DUST, 0.0, v))
    p = np.exp(y)
    mats = schedule_matrices(schedule, params.h)
    cert = RiskCertificate(p=p, alpha=params.alpha, cost=net.cost, mats=mats)
    chk = cert.check(tol)
    recomputed = False
    if not chk.valid:
        # exponentiating log-prices turns a tiny log-domain infeasibility into a
        # large absolute one when prices are large; the schedule itself may be fine
        try:
            p2 = backward_certificate(mats, net.cost, params.alpha)
        except UnstableError:
            p2 = None
        if p2 is not None:
            cert2 = RiskCertificate(p=p2, alpha=params.alpha, cost=net.cost, mats=mats)
            chk2 = cert2.check(tol)
            if chk2.valid:
                p, cert, chk, recomputed = p2, cert2, chk2, True
    if not chk.valid:
        raise SolutionRejected(
            f"solver solution rejected: certificate residual {chk.worst_residual:.3g} at "
            f"(stage, node) {chk.violation}")
    usage = budget_usage(schedule)
    if not usage.within(params.gamma_stage, params.gamma_total, budget_tol):
        raise SolutionRejected(f"solver solution rejected: budget exceeded {usage.per_stage.tolist()}")
    return Plan(schedule=schedule, certificate=cert, report=risk_report(p, net.x_hat),
                check=chk, usage=usage, result=result, recomputed=recomputed)
