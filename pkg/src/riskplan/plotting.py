"""Figures for the CLI: contour maps, search trees, trajectories and tubes.

Three-dimensional scenarios are drawn as their projection onto (x1, x2).
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.lines import Line2D  # noqa: E402

from .contour import FreeSpace, grid_points  # noqa: E402

_RES = 161


def _member_image(free: FreeSpace, t: float | None, res: int = _RES):
    lo, hi = free.lower[:2], free.upper[:2]
    pts = grid_points(lo, hi, res)
    if free.dim > 2:
        return None
    mask = np.ones(len(pts), dtype=bool)
    for c in free.contours:
        mask &= np.asarray(c.member(pts, t if c.time_varying else None))
    return mask.reshape(res, res)


def _background(ax, free: FreeSpace, times: Sequence[float] | None = None):
    lo, hi = free.lower[:2], free.upper[:2]
    extent = (lo[0], hi[0], lo[1], hi[1])
    if free.dim == 2:
        if free.time_varying:
            times = list(times) if times else [0.0, 0.5, 1.0]
            xs = np.linspace(lo[0], hi[0], _RES)
            ys = np.linspace(lo[1], hi[1], _RES)
            for k, t in enumerate(times):
                img = _member_image(free, t)
                ax.contour(xs, ys, img.T.astype(float), levels=[0.5],
                           colors=[plt.cm.Reds(0.4 + 0.6 * k / max(len(times) - 1, 1))],
                           linewidths=1.0)
        else:
            img = _member_image(free, None)
            ax.imshow(~img.T, origin="lower", extent=extent, cmap="Reds", alpha=0.35,
                      vmin=0, vmax=1.5, interpolation="nearest")
    ax.set_xlim(lo[0], hi[0])
    ax.set_ylim(lo[1], hi[1])
    ax.set_aspect("equal")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def contour_figure(grids: Sequence[tuple[str, dict, int]], path) -> Path:
    """Boundary of each exported grid's member region, one line style per grid."""
    fig, ax = plt.subplots(figsize=(5, 5))
    handles = []
    for k, (label, cols, res) in enumerate(grids):
        if "x3" in cols:
            continue
        color = plt.cm.viridis(k / max(len(grids) - 1, 1))
        xs = np.unique(cols["x1"])
        ys = np.unique(cols["x2"])
        member = np.asarray(cols["member"], dtype=float).reshape(res, res)
        if member.min() < member.max():
            ax.contour(xs, ys, member.T, levels=[0.5], colors=[color])
        handles.append(Line2D([], [], color=color, label=label))
    ax.set_aspect("equal")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    if handles:
        ax.legend(handles=handles, fontsize=7, loc="upper right")
    return _save(fig, path)


def plan_figure(free: FreeSpace, traj, tree=None, start=None, goal=None, path="plan.png",
                title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(5, 5))
    _background(ax, free, getattr(traj, "knots", None))
    if tree is not None:
        pts = tree.points()
        for p, c, _ in tree.edges():
            ax.plot(pts[[p, c], 0], pts[[p, c], 1], color="0.6", lw=0.5)
    wp = traj.waypoints
    ax.plot(wp[:, 0], wp[:, 1], "-o", color="tab:blue", ms=2.5, lw=1.5)
    if start is not None:
        ax.plot(*np.asarray(start)[:2], "s", color="k")
    if goal is not None:
        ax.plot(*np.asarray(goal)[:2], "^", color="k")
    if title:
        ax.set_title(title, fontsize=9)
    return _save(fig, path)


def tube_figure(free: FreeSpace, tubes, traj=None, start=None, goal=None, path="tube.png",
                per_tube: int = 12) -> Path:
    fig, ax = plt.subplots(figsize=(5, 5))
    _background(ax, free)
    for tube in tubes:
        ts = np.linspace(*tube.interval, per_tube)
        cen = tube.center_at(ts)
        for c, r in zip(cen, tube.radius(ts)):
            ax.add_patch(plt.Circle(c[:2], r, fill=False, color="tab:blue", lw=0.6))
    if traj is not None:
        wp = traj.waypoints
        ax.plot(wp[:, 0], wp[:, 1], ":", color="k", lw=1.0)
    if start is not None:
        ax.plot(*np.asarray(start)[:2], "s", color="k")
    if goal is not None:
        ax.plot(*np.asarray(goal)[:2], "^", color="k")
    return _save(fig, path)
