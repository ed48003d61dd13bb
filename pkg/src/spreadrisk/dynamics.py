"""Mean-field, linearised and stochastic spreading dynamics."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .network import SpreadingNetwork

_RATE_RTOL = 1e-7


def _check_rates(net: SpreadingNetwork, beta, delta):
    beta = np.asarray(beta, float)
    delta = np.asarray(delta, float)
    if beta.shape != (net.m,) or delta.shape != (net.n,):
        raise ValueError("rate arrays do not match the network")
    lo = net.beta_lo * (1 - _RATE_RTOL)
    hi = net.beta_hi * (1 + _RATE_RTOL)
    bad = np.flatnonzero((beta < lo) | (beta > hi))
    if len(bad):
        e = bad[0]
        ids = net.node_ids
        raise ValueError(
            f"beta on edge {ids[net.src[e]]}->{ids[net.dst[e]]} = {beta[e]:g} outside "
            f"[{net.beta_lo[e]:g}, {net.beta_hi[e]:g}]")
    bad = np.flatnonzero((delta < net.delta_lo * (1 - _RATE_RTOL)) | (delta > net.delta_hi * (1 + _RATE_RTOL)))
    if len(bad):
        i = bad[0]
        raise ValueError(
            f"delta at node {net.node_ids[i]} = {delta[i]:g} outside "
            f"[{net.delta_lo[i]:g}, {net.delta_hi[i]:g}]")
    return beta, delta


def spreading_matrix(net: SpreadingNetwork, beta) -> sp.csr_matrix:
    """Sparse ``B`` with ``B[i, j] = beta_ij`` for every edge j -> i."""
    return sp.csr_matrix((np.asarray(beta, float), (net.dst, net.src)), shape=(net.n, net.n))


def build_state_matrix(net: SpreadingNetwork, beta, delta, h: float, check: bool = True) -> sp.csr_matrix:
    """Linearised state matrix: ``1 - h delta_i`` on the diagonal, ``h beta_ij`` on edges."""
    if check:
        beta, delta = _check_rates(net, beta, delta)
    else:
        beta, delta = np.asarray(beta, float), np.asarray(delta, float)
    rows = np.concatenate([np.arange(net.n), net.dst])
    cols = np.concatenate([np.arange(net.n), net.src])
    vals = np.concatenate([1.0 - h * delta, h * beta])
    return sp.csr_matrix((vals, (rows, cols)), shape=(net.n, net.n))


def step_nonlinear(x, net: SpreadingNetwork, beta, delta, h: float) -> np.ndarray:
    """One forward-Euler step of the mean-field SIS equations."""
    x = np.asarray(x, float)
    if x.shape != (net.n,):
        raise ValueError(f"state has shape {x.shape}, expected ({net.n},)")
    if np.any(x < 0) or np.any(x > 1):
        raise ValueError("state must lie in [0, 1]")
    B = spreading_matrix(net, beta)
    delta = np.asarray(delta, float)
    return x + h * (1.0 - x) * (B @ x) - h * delta * x


def step_linear(x, A) -> np.ndarray:
    x = np.asarray(x, float)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: A is {A.shape}, x has {x.shape[0]} entries")
    return np.asarray(A @ x).ravel()


@dataclass
class Trajectory:
    states: np.ndarray  # (steps, n), first row is x^1
    linear: bool

    def to_csv(self, node_ids: Optional[Sequence] = None) -> str:
        steps, n = self.states.shape
        ids = node_ids or range(1, n + 1)
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["k", "node", "value"])
        for k in range(steps):
            for i, nid in enumerate(ids):
                wr.writerow([k + 1, nid, repr(float(self.states[k, i]))])
        return buf.getvalue()


def rollout(x1, net: SpreadingNetwork, stage_rates, h: float, steps: int, linear: bool = False) -> Trajectory:
    """Iterate ``steps`` states from ``x1`` using per-stage rates (last stage persists)."""
    x = np.asarray(x1, float).copy()
    K = len(stage_rates)
    out = np.empty((steps, net.n))
    mats = [build_state_matrix(net, b, d, h, check=False) for b, d in stage_rates] if linear else None
    for k in range(steps):
        out[k] = x
        s = min(k, K - 1)
        if linear:
            x = step_linear(x, mats[s])
        else:
            b, d = stage_rates[s]
            x = np.clip(step_nonlinear(x, net, b, d, h), 0.0, 1.0)
    return Trajectory(out, linear)


def default_horizon(alpha: float, tail: float = 1e-6) -> int:
    """Smallest T with ``alpha**T <= tail``."""
    if not 0 < alpha < 1:
        raise ValueError("a finite default horizon needs alpha < 1; pass T explicitly")
    return int(math.ceil(math.log(tail) / math.log(alpha)))


@dataclass
class SimulationResult:
    costs: np.ndarray  # discounted cost per replication
    mean_state: np.ndarray  # (T, n) empirical infection probability per step
    seed: int
    horizon: int

    @property
    def replications(self) -> int:
        return len(self.costs)

    @property
    def mean(self) -> float:
        return float(self.costs.mean())

    @property
    def stderr(self) -> float:
        R = len(self.costs)
        return float(self.costs.std(ddof=1) / math.sqrt(R)) if R > 1 else 0.0

    @property
    def ci95(self) -> tuple:
        half = 1.959963984540054 * self.stderr
        return (self.mean - half, self.mean + half)

    def summary(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "ci95": list(self.ci95),
                "replications": self.replications, "seed": self.seed, "horizon": self.horizon}


Sampler = Callable[[np.random.Generator, int], np.ndarray]

BLOCK = 512


def bernoulli_sampler(x_hat) -> Sampler:
    x_hat = np.asarray(x_hat, float)

    def draw(rng: np.random.Generator, R: int) -> np.ndarray:
        return rng.random((R, len(x_hat))) < x_hat

    return draw


def simulate_stochastic(net: SpreadingNetwork, h: float, alpha: float, stage_rates=None,
                        replications: int = 1000, seed: int = 0, T: Optional[int] = None,
                        sampler: Optional[Sampler] = None) -> SimulationResult:
    """Monte-Carlo discounted cost of the stochastic SIS automaton.

    Each step an infected node recovers with probability ``h delta_i`` and a
    susceptible node is infected with probability
    ``1 - prod_{j infected} (1 - h beta_ij)``. The cost of a replication is
    ``sum_{k=1}^T alpha^k C X^k`` with ``X^1`` drawn from ``sampler``
    (independent Bernoulli per ``x_hat`` by default).

    Replications are processed in fixed blocks of 512, block ``b`` seeded by
    ``(seed, b)``, so results do not depend on how blocks are scheduled.
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    if not isinstance(seed, (int, np.integer)) or seed < 0:
        raise ValueError("seed must be a nonnegative integer")
    if T is None:
        T = default_horizon(alpha)
    if T < 1:
        raise ValueError("horizon must be >= 1")
    if stage_rates is None:
        stage_rates = [(net.beta_hi, net.delta_lo)]
    sampler = sampler or bernoulli_sampler(net.x_hat)

    # log survival matrices L[i, j] = log(1 - h beta_ij), one per stage
    logs = [sp.csr_matrix((np.log1p(-h * np.asarray(b)), (net.dst, net.src)), shape=(net.n, net.n))
            for b, _ in stage_rates]
    recov = [h * np.asarray(d, float) for _, d in stage_rates]
    K = len(stage_rates)
    C = net.cost
    disc = alpha ** np.arange(1, T + 1)

    costs = np.empty(replications)
    state_sum = np.zeros((T, net.n))
    for b, start in enumerate(range(0, replications, BLOCK)):
        R = min(BLOCK, replications - start)
        rng = np.random.default_rng([seed, b])
        X = np.asarray(sampler(rng, R), dtype=bool)
        acc = np.zeros(R)
        for k in range(T):
            if not X.any():
                break
            Xf = X.astype(float)
            acc += disc[k] * (Xf @ C)
            state_sum[k] += Xf.sum(axis=0)
            s = min(k, K - 1)
            p_inf = -np.expm1((logs[s] @ Xf.T).T)
            r = rng.random((R, net.n))
            X = np.where(X, r >= recov[s], r < p_inf)
        costs[start:start + R] = acc
    return SimulationResult(costs=costs, mean_state=state_sum / replications, seed=int(seed), horizon=T)
