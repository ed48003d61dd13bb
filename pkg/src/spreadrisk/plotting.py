"""Static figures and the CSV tables behind them.

Figures are drawn on bare :class:`matplotlib.figure.Figure` objects, so no GUI
backend is ever selected; the file suffix picks the format (SVG by default).
"""
from __future__ import annotations

import csv
import io
from typing import Optional, Sequence

import numpy as np
from matplotlib.colors import ListedColormap
from matplotlib.figure import Figure

from .resources import AllocationSchedule

#: raster legend colours: desert, grassland, eucalypt, water, city
VEG_COLOURS = {"D": "#e8d8a8", "G": "#b8dc8c", "E": "#4f8a3c", "W": "#7fb2e5", "C": "#9a9a9a"}


def node_allocation(schedule: AllocationSchedule) -> np.ndarray:
    """``(K, n)`` allocation per stage attributed to nodes: ``v`` plus ``u`` on incoming edges."""
    net = schedule.network
    out = schedule.v.copy()
    for k in range(schedule.K):
        out[k] += np.bincount(net.dst, weights=schedule.u[k], minlength=net.n)
    return out


def heatmap_csv(schedule: AllocationSchedule) -> str:
    """Long table ``k,node,v,u_in,total`` behind :func:`plot_allocation_heatmap`."""
    net = schedule.network
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["k", "node", "v", "u_in", "total"])
    for k in range(schedule.K):
        u_in = np.bincount(net.dst, weights=schedule.u[k], minlength=net.n)
        for i in range(net.n):
            v = float(schedule.v[k, i])
            wr.writerow([k + 1, net.node_ids[i], repr(v), repr(float(u_in[i])), repr(v + float(u_in[i]))])
    return buf.getvalue()


def plot_allocation_heatmap(schedule: AllocationSchedule, path, title: Optional[str] = None) -> None:
    """Stage-by-node heatmap of :func:`node_allocation`."""
    data = node_allocation(schedule)
    K, n = data.shape
    fig = Figure(figsize=(max(4.0, min(14.0, 0.45 * n + 2)), 1.0 + 0.5 * K))
    ax = fig.add_subplot()
    im = ax.imshow(data, aspect="auto", cmap="Reds", vmin=0.0, interpolation="nearest")
    ax.set_yticks(range(K), [f"k={k + 1}" for k in range(K)])
    if n <= 40:
        ax.set_xticks(range(n), [str(i) for i in schedule.network.node_ids])
    ax.set_xlabel("node")
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, label="allocated resources")
    fig.tight_layout()
    fig.savefig(path)


def _raster_image(raster: Sequence[str]):
    keys = list(VEG_COLOURS)
    grid = np.array([[keys.index(ch) for ch in row] for row in raster])
    return grid, ListedColormap([VEG_COLOURS[k] for k in keys])


def plot_wildfire_map(schedule: AllocationSchedule, raster: Sequence[str], path,
                      tau: float = 1e-6, title: Optional[str] = None) -> None:
    """One panel per stage: landscape plus allocated edges.

    Edges allocated in the panel's stage are drawn bold; earlier allocations
    stay visible but thin and faded. Each edge is a half-length stroke from the
    burning cell towards its neighbour, width growing with the amount.
    """
    net = schedule.network
    H, W = len(raster), len(raster[0])
    if net.n != H * W:
        raise ValueError("raster does not match the network size")
    grid, cmap = _raster_image(raster)
    K = schedule.K
    cols = min(K, 2)
    rows = int(np.ceil(K / cols))
    fig = Figure(figsize=(5.2 * cols, 3.6 * rows))
    r0, c0 = np.divmod(net.src, W)
    r1, c1 = np.divmod(net.dst, W)
    umax = max(float(schedule.u.max(initial=0.0)), 1e-12)
    for k in range(K):
        ax = fig.add_subplot(rows, cols, k + 1)
        ax.imshow(grid, cmap=cmap, vmin=0, vmax=len(VEG_COLOURS) - 1, interpolation="nearest")
        prev = schedule.u[:k].sum(axis=0)
        for amount, width, alpha, colour in ((prev, 0.6, 0.45, "#5a1f1f"), (schedule.u[k], 2.2, 1.0, "#c0181a")):
            for e in np.flatnonzero(amount > tau):
                ax.plot([c0[e], (c0[e] + c1[e]) / 2], [r0[e], (r0[e] + r1[e]) / 2], color=colour,
                        alpha=alpha, linewidth=width * (0.3 + amount[e] / umax), solid_capstyle="butt")
        ax.set_title(f"k={k + 1}" if k < K - 1 or K == 1 else "k=K")
        ax.set_xticks([])
        ax.set_yticks([])
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path)


def plot_landscape(raster: Sequence[str], values: Optional[np.ndarray], path, label: str = "",
                   log: bool = False) -> None:
    """Landscape raster, or a per-cell field (cost, outbreak probability, risk) on it."""
    H, W = len(raster), len(raster[0])
    fig = Figure(figsize=(6.0, 3.9))
    ax = fig.add_subplot()
    if values is None:
        grid, cmap = _raster_image(raster)
        ax.imshow(grid, cmap=cmap, vmin=0, vmax=len(VEG_COLOURS) - 1, interpolation="nearest")
    else:
        data = np.asarray(values, float).reshape(H, W)
        if log:
            data = np.log10(np.maximum(data, np.min(data[data > 0], initial=1e-12)))
        im = ax.imshow(data, cmap="viridis", interpolation="nearest")
        fig.colorbar(im, ax=ax, label=("log10 " if log else "") + label)
    ax.set_xticks([])
    ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(path)


def plot_bench(K, seconds, path, fit=None) -> None:
    """Wall time against the number of stages with an optional ``(slope, intercept, r2)`` fit."""
    fig = Figure(figsize=(4.8, 3.4))
    ax = fig.add_subplot()
    ax.plot(K, seconds, "o", label="solve")
    if fit is not None:
        slope, icpt, r2 = fit
        ks = np.array([min(K), max(K)], float)
        ax.plot(ks, slope * ks + icpt, "-", label=f"linear fit, R²={r2:.3f}")
        ax.legend()
    ax.set_xlabel("stages K")
    ax.set_ylabel("wall time [s]")
    fig.tight_layout()
    fig.savefig(path)


def plot_sparsify_history(history, path) -> None:
    """Nonzero entries and objective across reweighting iterations."""
    q = [it.q for it in history if it.feasible]
    nz = [it.nonzeros_u + it.nonzeros_v for it in history if it.feasible]
    obj = [it.objective for it in history if it.feasible]
    fig = Figure(figsize=(4.8, 3.4))
    ax = fig.add_subplot()
    ax.plot(q, nz, "o-", color="#c0181a")
    ax.set_xlabel("iteration q")
    ax.set_ylabel("nonzero allocations", color="#c0181a")
    ax2 = ax.twinx()
    ax2.plot(q, obj, "s--", color="#333333")
    ax2.set_ylabel("objective")
    fig.tight_layout()
    fig.savefig(path)
