"""Random valid instances shared by the property and acceptance tests."""
import numpy as np

from spreadrisk.network import SpreadingNetwork, StageParameters


def random_network(rng: np.random.Generator, n: int, density: float = 0.4, zero_cost: float = 0.15):
    """Random directed network whose parameters pass ``validate`` for the returned ``h``."""
    pairs = [(j, i) for i in range(n) for j in range(n) if i != j and rng.random() < density]
    src = np.array([p[0] for p in pairs], int)
    dst = np.array([p[1] for p in pairs], int)
    m = len(pairs)
    beta_hi = rng.uniform(0.05, 0.6, m)
    beta_lo = beta_hi * rng.uniform(0.05, 0.6, m)
    delta_lo = rng.uniform(0.05, 0.5, n)
    delta_hi = delta_lo + rng.uniform(0.0, 1.0, n) * (0.95 - delta_lo)
    cost = rng.uniform(0.1, 2.0, n) * (rng.random(n) >= zero_cost)
    if not cost.any():
        cost[0] = 1.0
    x_hat = rng.uniform(0.0, 1.0, n)
    x_hat[rng.integers(n)] = max(x_hat.max(), 0.2)
    net = SpreadingNetwork(n=n, src=src, dst=dst, beta_lo=beta_lo, beta_hi=beta_hi,
                           w_edge=rng.uniform(0.5, 2.0, m), delta_lo=delta_lo, delta_hi=delta_hi,
                           delta_cap=1.0, cost=cost, x_hat=x_hat, w_node=rng.uniform(0.5, 2.0, n))
    mass = np.bincount(dst, weights=beta_hi, minlength=n).max() if m else 0.0
    h = float(min(0.3, 0.9 / mass)) if mass > 0 else 0.3
    return net, h


def random_params(rng: np.random.Generator, h: float, K: int = None):
    K = int(rng.integers(1, 5)) if K is None else K
    gamma_stage = rng.uniform(0.2, 2.0)
    gamma_total = None if rng.random() < 0.5 else float(gamma_stage * K * rng.uniform(0.4, 1.0))
    return StageParameters(K=K, h=h, alpha=float(rng.uniform(0.5, 0.97)), gamma_stage=float(gamma_stage),
                           gamma_total=gamma_total)


def scalar_network(c=1.0, delta_lo=0.2, delta_hi=0.8, x_hat=0.5, w=1.0, delta_cap=1.0):
    return SpreadingNetwork(n=1, src=[], dst=[], beta_lo=[], beta_hi=[], w_edge=[],
                            delta_lo=[delta_lo], delta_hi=[delta_hi], delta_cap=delta_cap,
                            cost=[c], x_hat=[x_hat], w_node=[w])
