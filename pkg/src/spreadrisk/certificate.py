"""Linear cost-to-go certificates for the linearised spreading dynamics.

A certificate is a sequence of nonnegative row vectors ``p[0..K-1]`` with

    p[k]   >= C + alpha * p[k+1] @ A[k]     for k < K-1
    p[K-1] >= C + alpha * p[K-1] @ A[K-1]

elementwise. Then ``p[0] @ x`` bounds the discounted cost of both the linear
and the mean-field dynamics started from ``x``, and ``p[0] @ x_hat`` bounds
the expected cost when the initial state is random with mean ``x_hat``.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dynamics import build_state_matrix, spreading_matrix

DEFAULT_TOL = 1e-6


class UnstableError(ValueError):
    """The discounted linear system admits no finite certificate."""


@dataclass
class CertificateCheck:
    valid: bool
    worst_residual: float
    violation: Optional[tuple]  # 1-based (stage, node) of the worst violation
    residuals: np.ndarray = field(repr=False)  # (K, n); positive entries violate


def certificate_residuals(p, mats: Sequence, C, alpha: float) -> np.ndarray:
    """``C + alpha p^{k+1} A^k - p^k`` per stage (positive = violated)."""
    p = np.atleast_2d(np.asarray(p, float))
    K, n = p.shape
    if len(mats) != K:
        raise ValueError(f"{len(mats)} stage matrices for a {K}-stage certificate")
    C = np.asarray(C, float)
    if C.shape != (n,):
        raise ValueError("cost vector does not match certificate width")
    res = np.empty((K, n))
    for k in range(K):
        A = mats[k]
        if A.shape != (n, n):
            raise ValueError(f"stage {k + 1} matrix has shape {A.shape}, expected {(n, n)}")
        nxt = p[min(k + 1, K - 1)]
        res[k] = C + alpha * np.asarray(A.T @ nxt).ravel() - p[k]
    return np.maximum(res, -p)  # a negative price is itself a violation


def verify_certificate(p, mats: Sequence, C, alpha: float, tol: float = DEFAULT_TOL) -> CertificateCheck:
    """Check the certificate inequalities elementwise.

    ``tol`` is relative to the largest cost; when every cost is zero it is
    applied as an absolute tolerance.
    """
    res = certificate_residuals(p, mats, C, alpha)
    cmax = float(np.max(np.abs(C))) if np.size(C) else 0.0
    thresh = tol * (cmax if cmax > 0 else 1.0)
    worst = float(res.max()) if res.size else 0.0
    if worst > thresh:
        k, j = np.unravel_index(int(np.argmax(res)), res.shape)
        return CertificateCheck(False, worst, (int(k) + 1, int(j) + 1), res)
    return CertificateCheck(True, worst, None, res)


def spectral_radius_bound(A, iters: int = 200, rtol: float = 1e-10):
    """Collatz-Wielandt bracket ``(lower, upper)`` on the spectral radius of nonnegative ``A``.

    Power iteration from the all-ones vector; exits early once the bracket
    excludes 1 or has closed to ``rtol``.
    """
    n = A.shape[0]
    x = np.ones(n)
    lo, hi = 0.0, np.inf
    for _ in range(iters):
        y = np.asarray(A @ x).ravel() + 1e-14 * x.sum() / n
        ratio = y / x
        lo, hi = max(lo, float(ratio.min())), min(hi, float(ratio.max()))
        if hi < 1 or lo >= 1 or hi - lo <= rtol * max(hi, 1e-300):
            break
        x = y / y.max()
    return lo, hi


def tightest_stationary_certificate(A, C, alpha: float) -> np.ndarray:
    """Smallest ``p`` with ``p >= C + alpha p A``, i.e. ``p (I - alpha A) = C``."""
    A = sp.csr_matrix(A)
    C = np.asarray(C, float)
    n = A.shape[0]
    lo, hi = spectral_radius_bound(alpha * A)
    if lo >= 1:
        raise UnstableError(f"undiscounted unstable: spectral radius of alpha*A >= {lo:.6g}; no finite certificate")
    if not np.any(C):
        return np.zeros(n)
    M = (sp.identity(n, format="csc") - alpha * A.T.tocsc())
    p = spla.spsolve(M, C) if n > 1 else np.array([C[0] / M.toarray()[0, 0]])
    p = np.atleast_1d(np.asarray(p, float))
    if not np.all(np.isfinite(p)) or np.any(p < -1e-12 * max(1.0, np.abs(p).max())):
        raise UnstableError("undiscounted unstable: no finite certificate")
    return np.maximum(p, 0.0)


def backward_certificate(mats: Sequence, C, alpha: float) -> np.ndarray:
    """Tightest certificate for fixed stage matrices: stationary at K, then backward recursion."""
    K = len(mats)
    C = np.asarray(C, float)
    p = np.empty((K, len(C)))
    p[K - 1] = tightest_stationary_certificate(mats[K - 1], C, alpha)
    for k in range(K - 2, -1, -1):
        p[k] = C + alpha * np.asarray(mats[k].T @ p[k + 1]).ravel()
    return p


def schedule_matrices(schedule, h: float):
    net = schedule.network
    return [build_state_matrix(net, b, d, h) for b, d in schedule.stage_rates()]


@dataclass
class RiskCertificate:
    """Price vectors ``p`` (K x n) together with the data they certify."""

    p: np.ndarray
    alpha: float
    cost: np.ndarray
    mats: list = field(default_factory=list, repr=False)
    residual: float = float("nan")

    @property
    def K(self) -> int:
        return self.p.shape[0]

    def check(self, tol: float = DEFAULT_TOL) -> CertificateCheck:
        chk = verify_certificate(self.p, self.mats, self.cost, self.alpha, tol)
        self.residual = chk.worst_residual
        return chk

    def to_dict(self) -> dict:
        return {"format": "spreadrisk-certificate/1", "K": self.K, "alpha": self.alpha,
                "p": self.p.tolist(), "residual": self.residual}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @staticmethod
    def load_prices(path):
        doc = json.loads(Path(path).read_text())
        return np.asarray(doc["p"], float), float(doc["alpha"])


@dataclass
class RiskReport:
    p1: np.ndarray
    x_hat: np.ndarray
    risk: np.ndarray

    @property
    def max_risk(self) -> float:
        return float(self.risk.max()) if self.risk.size else 0.0

    @property
    def sum_risk(self) -> float:
        return float(self.risk.sum())

    @property
    def argmax(self) -> int:
        return int(np.argmax(self.risk))

    def to_csv(self, node_ids=None) -> str:
        ids = node_ids or range(1, len(self.risk) + 1)
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["node", "p1", "x_hat", "risk"])
        for nid, a, b, r in zip(ids, self.p1, self.x_hat, self.risk):
            wr.writerow([nid, repr(float(a)), repr(float(b)), repr(float(r))])
        return buf.getvalue()


def risk_report(p, x_hat) -> RiskReport:
    """Per-node risk ``p^1_i * x_hat_i``; ``p`` may be the full certificate or ``p^1``."""
    p = np.asarray(p, float)
    p1 = p[0] if p.ndim == 2 else p
    x_hat = np.asarray(x_hat, float)
    return RiskReport(p1=p1, x_hat=x_hat, risk=p1 * x_hat)


@dataclass
class RolloutCost:
    J_nonlinear: float
    J_linear: float
    steps: int
    tail_bound: float


def rollout_cost(x1, net, stage_rates, h: float, alpha: float, p_tail=None,
                 tol: float = 1e-10, max_steps: int = 1_000_000) -> RolloutCost:
    """Truncated discounted cost ``sum_{k>=1} alpha^k C x^k`` for both dynamics.

    The sum stops at the first ``L >= K`` with ``alpha^L p_tail x^L <= tol``,
    which bounds the omitted tail of the linear (and hence mean-field) cost.
    ``p_tail`` defaults to the tightest stationary certificate of the last
    stage.
    """
    x_lin = np.asarray(x1, float).copy()
    if np.any(x_lin < 0) or np.any(x_lin > 1):
        raise ValueError("x1 must lie in [0, 1]")
    x_nl = x_lin.copy()
    K = len(stage_rates)
    mats = [build_state_matrix(net, b, d, h, check=False) for b, d in stage_rates]
    Bs = [spreading_matrix(net, b) for b, _ in stage_rates]
    ds = [np.asarray(d, float) for _, d in stage_rates]
    if p_tail is None:
        try:
            p_tail = tightest_stationary_certificate(mats[-1], net.cost, alpha)
        except UnstableError:
            raise ValueError("cannot truncate: no valid tail certificate") from None
    p_tail = np.asarray(p_tail, float)
    C = net.cost
    J_lin = J_nl = 0.0
    disc = 1.0
    for k in range(max_steps):
        disc *= alpha
        if k >= K - 1:
            tail = disc * float(p_tail @ x_lin)
            if tail <= tol:
                return RolloutCost(J_nl, J_lin, k, tail)
        J_lin += disc * float(C @ x_lin)
        J_nl += disc * float(C @ x_nl)
        s = min(k, K - 1)
        x_lin = np.asarray(mats[s] @ x_lin).ravel()
        x_nl = np.clip(x_nl + h * (1 - x_nl) * (Bs[s] @ x_nl) - h * ds[s] * x_nl, 0.0, 1.0)
    raise ValueError("cannot truncate: tail bound did not fall below tolerance")
