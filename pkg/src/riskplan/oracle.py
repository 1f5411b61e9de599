"""Monte Carlo collision-risk estimates: discretized validation, not certificates.

The obstacle body is split as sum_k coeff_k(x, t) * m_k(w) over its w-monomials,
so evaluating many points against many draws is one matrix product per chunk.
All points of one call share the same draws (common random numbers).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .contour import Obstacle
from .dist import DistributionSpec
from .poly import T, Kind, Polynomial, Var, x

INTERSECTION_NOTE = (
    "the maximum point risk is a lower bound on the slice-intersection probability; "
    "the sampled-intersection value is an approximation from finitely many tube points"
)
DISCRETIZED_NOTE = "discretized validation, not a certificate"

_CHUNK = 4_000_000  # points x draws per block


@dataclass(frozen=True)
class RiskEstimate:
    p: float
    n: int
    seed: int | None = None

    @property
    def se(self) -> float:
        return math.sqrt(self.p * (1 - self.p) / self.n)

    def within(self, delta: float, k: float = 3.0) -> bool:
        return self.p <= delta + k * self.se

    def to_json(self) -> dict:
        return {"p": self.p, "n": self.n, "se": self.se, "seed": self.seed}


class _Decomposed:
    """Body polynomial as coefficient polynomials times w-monomial values."""

    def __init__(self, body: Polynomial, dists: Mapping[Var, DistributionSpec]):
        self.wvars = sorted(v for v in body.free_variables() if v.kind is Kind.UNCERTAIN)
        missing = [v.name for v in self.wvars if v not in dists]
        if missing:
            raise KeyError(f"no distribution for {', '.join(missing)}")
        parts = body.split(self.wvars)
        self.monos = list(parts)
        self.coeffs = [parts[m] for m in self.monos]
        self.dists = {v: dists[v] for v in self.wvars}

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """(K, n) matrix of w-monomial values for n joint draws."""
        draws = {v: self.dists[v].sample(rng, n) for v in self.wvars}
        rows = []
        for m in self.monos:
            row = np.ones(n)
            for v, e in m:
                row = row * draws[v] ** e
            rows.append(row)
        return np.array(rows)

    def coefficients(self, points: np.ndarray, t) -> np.ndarray:
        """(m, K) coefficient values at points (m, n_x) and times (scalar or (m,))."""
        m = len(points)
        asg = {x(i + 1): points[:, i] for i in range(points.shape[1])}
        if t is not None:
            asg[T] = np.broadcast_to(np.asarray(t, dtype=float), (m,))
        cols = []
        for c in self.coeffs:
            if c.free_variables():
                cols.append(np.broadcast_to(np.asarray(c.eval(asg), dtype=float), (m,)))
            else:
                cols.append(np.full(m, c.constant))
        return np.stack(cols, axis=1)


def _hits(dec: _Decomposed, points, t, wm: np.ndarray) -> np.ndarray:
    """Boolean (m, n) matrix: body >= 0 for each point and draw."""
    C = dec.coefficients(points, t)
    return C @ wm >= 0


def risk_field(obs: Obstacle, dists: Mapping[Var, DistributionSpec], points, t=None,
               n: int = 100_000, seed: int = 0) -> np.ndarray:
    """Estimated Prob(body(x, w[, t]) >= 0) at every point, with shared draws."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if obs.dynamic and t is None:
        raise ValueError(f"obstacle {obs.name!r} is dynamic; pass t")
    dec = _Decomposed(obs.body, dists)
    rng = np.random.default_rng(seed)
    wm = dec.draw(rng, n)
    tt = None if t is None else np.broadcast_to(np.asarray(t, dtype=float), (len(points),))
    out = np.empty(len(points))
    step = max(1, _CHUNK // n)
    for i in range(0, len(points), step):
        sl = slice(i, i + step)
        out[sl] = _hits(dec, points[sl], None if tt is None else tt[sl], wm).mean(axis=1)
    return out


def mc_point_risk(point, obs: Obstacle, dists: Mapping[Var, DistributionSpec], t=None,
                  n: int = 100_000, seed: int = 0) -> RiskEstimate:
    p = float(risk_field(obs, dists, np.asarray(point, dtype=float)[None, :], t, n, seed)[0])
    return RiskEstimate(p, n, seed)


def _streams(seed: int, k: int) -> list[int]:
    """Independent per-obstacle seeds derived from the master seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(k)]


def _time_grid(horizon, n_t: int) -> np.ndarray:
    if n_t < 2:
        raise ValueError("time grid needs n_t >= 2")
    return np.linspace(horizon[0], horizon[1], n_t)


def mc_trajectory_risk(traj, obstacles: Sequence[Obstacle], dists: Mapping[Var, DistributionSpec],
                       n_omega: int = 100_000, n_t: int = 1000, seed: int = 0) -> dict:
    """Per-obstacle maximum point risk along x(t) over a uniform time grid."""
    ts = _time_grid(traj.horizon, n_t)
    pts = np.asarray(traj(ts), dtype=float)
    out = {}
    for obs, s in zip(obstacles, _streams(seed, len(obstacles))):
        r = risk_field(obs, dists, pts, ts if obs.dynamic else None, n_omega, s)
        k = int(np.argmax(r))
        est = RiskEstimate(float(r[k]), n_omega, s)
        out[obs.name] = {"max_risk": est.p, "argmax_t": float(ts[k]), "n": n_omega, "se": est.se,
                         "seed": s, "note": DISCRETIZED_NOTE}
    return out


def ball_points(rng: np.random.Generator, n: int, dim: int, include_boundary: bool = True):
    """n unit-ball points by rejection sampling; the first ones sit on the sphere if asked."""
    pts = []
    if include_boundary:
        k = min(n, 2 * dim if dim > 2 else 8)
        if dim == 2:
            ang = np.linspace(0, 2 * np.pi, k, endpoint=False)
            pts.append(np.stack([np.cos(ang), np.sin(ang)], axis=-1))
        else:
            d = rng.normal(size=(k, dim))
            pts.append(d / np.linalg.norm(d, axis=1, keepdims=True))
        n -= k
    while n > 0:
        cand = rng.uniform(-1, 1, size=(2 * n + 8, dim))
        cand = cand[np.sum(cand ** 2, axis=1) <= 1][:n]
        pts.append(cand)
        n -= len(cand)
    return np.concatenate(pts) if pts else np.zeros((0, dim))


def mc_tube_risk(tubes, obstacles: Sequence[Obstacle], dists: Mapping[Var, DistributionSpec],
                 n_omega: int = 10_000, n_t: int = 100, n_x: int = 100, seed: int = 0) -> dict:
    """Max point risk and sampled slice-intersection risk for one tube or a chain of tubes.

    Each tube gets ``n_t`` time samples; each slice gets ``n_x`` points drawn in
    the ball (a few on its boundary, the rest uniform inside).
    """
    if not isinstance(tubes, (list, tuple)):
        tubes = [tubes]
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    unit = ball_points(rng, n_x, len(tubes[0].center))
    ts_all, pts_all = [], []
    for tube in tubes:
        ts = _time_grid(tube.interval, n_t)
        cen = tube.center_at(ts)
        rad = tube.radius(ts)
        pts_all.append(cen[:, None, :] + rad[:, None, None] * unit[None, :, :])
        ts_all.append(ts)
    ts = np.concatenate(ts_all)
    pts = np.concatenate(pts_all)  # (slices, n_x, dim)
    flat = pts.reshape(-1, pts.shape[-1])
    tflat = np.repeat(ts, n_x)
    out = {}
    for obs, s in zip(obstacles, _streams(seed, len(obstacles))):
        dec = _Decomposed(obs.body, dists)
        wm = dec.draw(np.random.default_rng(s), n_omega)
        point_risk = np.empty(len(flat))
        slice_risk = np.empty(len(ts))
        per = max(1, _CHUNK // (n_omega * n_x))  # slices per block
        for i in range(0, len(ts), per):
            rows = slice(i * n_x, (i + per) * n_x)
            hits = _hits(dec, flat[rows], tflat[rows] if obs.dynamic else None, wm)
            point_risk[rows] = hits.mean(axis=1)
            slice_risk[i:i + per] = hits.reshape(-1, n_x, n_omega).any(axis=1).mean(axis=1)
        k = int(np.argmax(point_risk))
        j = int(np.argmax(slice_risk))
        est = RiskEstimate(float(point_risk[k]), n_omega, s)
        inter = RiskEstimate(float(slice_risk[j]), n_omega, s)
        out[obs.name] = {
            "max_risk": est.p, "argmax_t": float(tflat[k]), "argmax_x": flat[k].tolist(),
            "n": n_omega, "se": est.se, "seed": s,
            "slice_intersection_risk": inter.p, "slice_intersection_se": inter.se,
            "slice_argmax_t": float(ts[j]), "note": INTERSECTION_NOTE,
        }
    return out


def max_risk(report: dict) -> tuple[float, float]:
    """(max_risk, its se) across the obstacles of a trajectory or tube report."""
    worst = max(report.values(), key=lambda r: r["max_risk"], default=None)
    return (0.0, 0.0) if worst is None else (worst["max_risk"], worst["se"])
