"""Piecewise-linear and polynomial trajectories x(t)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .poly import T, Polynomial


@dataclass
class Piece:
    """x(t) = a + b t on [t0, t1]."""

    a: np.ndarray
    b: np.ndarray
    t0: float
    t1: float

    @property
    def polys(self) -> list[Polynomial]:
        return [Polynomial({(): float(ai), ((T, 1),): float(bi)}, (T,))
                for ai, bi in zip(self.a, self.b)]

    @property
    def interval(self) -> tuple[float, float]:
        return (self.t0, self.t1)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.a + np.multiply.outer(t, self.b)

    @property
    def start(self) -> np.ndarray:
        return self(self.t0)

    @property
    def end(self) -> np.ndarray:
        return self(self.t1)


class PiecewiseLinearTrajectory:
    """Continuous polyline through ``waypoints`` reached at times ``knots``."""

    def __init__(self, waypoints, knots, certificates=None):
        self.waypoints = np.atleast_2d(np.asarray(waypoints, dtype=float))
        self.knots = np.asarray(knots, dtype=float)
        if len(self.knots) != len(self.waypoints) or len(self.knots) < 2:
            raise ValueError("need one knot per waypoint and at least two waypoints")
        if np.any(np.diff(self.knots) <= 0):
            raise ValueError("knot times must be strictly increasing")
        self.certificates = list(certificates) if certificates is not None \
            else [None] * (len(self.knots) - 1)

    @classmethod
    def uniform(cls, waypoints, t0: float, tf: float, certificates=None):
        """Equal-duration pieces: t_i = t0 + i (tf - t0) / s."""
        n = len(waypoints)
        return cls(waypoints, t0 + (tf - t0) * np.arange(n) / (n - 1), certificates)

    @classmethod
    def by_arclength(cls, waypoints, t0: float, tf: float, certificates=None):
        """Constant-speed timing; minimizes the integral of |x'|^2 for a fixed polyline."""
        wp = np.asarray(waypoints, dtype=float)
        seg = np.linalg.norm(np.diff(wp, axis=0), axis=1)
        total = seg.sum()
        if total == 0:
            return cls.uniform(wp, t0, tf, certificates)
        cum = np.concatenate([[0.0], np.cumsum(seg)]) / total
        # zero-length pieces would collapse knots; give them a sliver of time
        cum = np.maximum.accumulate(cum + 1e-12 * np.arange(len(cum)))
        cum = cum / cum[-1]
        return cls(wp, t0 + (tf - t0) * cum, certificates)

    @property
    def dim(self) -> int:
        return self.waypoints.shape[1]

    @property
    def horizon(self) -> tuple[float, float]:
        return (float(self.knots[0]), float(self.knots[-1]))

    @property
    def pieces(self) -> list[Piece]:
        out = []
        for i in range(len(self.knots) - 1):
            t0, t1 = self.knots[i], self.knots[i + 1]
            p0, p1 = self.waypoints[i], self.waypoints[i + 1]
            b = (p1 - p0) / (t1 - t0)
            out.append(Piece(p0 - b * t0, b, float(t0), float(t1)))
        return out

    def __len__(self) -> int:
        return len(self.knots) - 1

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.stack([np.interp(t, self.knots, self.waypoints[:, d]) for d in range(self.dim)],
                        axis=-1)

    @property
    def certified(self) -> bool:
        return all(c is not None and c.verified for c in self.certificates)

    def length(self) -> float:
        return trajectory_length(self)

    def split(self, times: Sequence[float]) -> PiecewiseLinearTrajectory:
        """Insert extra knots (at the given times) without changing the path."""
        ts = np.union1d(self.knots, np.asarray(times, dtype=float))
        ts = ts[(ts >= self.knots[0]) & (ts <= self.knots[-1])]
        return PiecewiseLinearTrajectory(self(ts), ts)

    def to_json(self, timing: bool = False) -> dict:
        return {
            "type": "piecewise_linear",
            "pieces": [{"a": p.a.tolist(), "b": p.b.tolist(), "t0": p.t0, "t1": p.t1}
                       for p in self.pieces],
            "waypoints": self.waypoints.tolist(),
            "knots": self.knots.tolist(),
            "length": self.length(),
            "certified": self.certified,
            "certificates": [c.to_json(timing) if c is not None else None
                             for c in self.certificates],
        }

    @classmethod
    def from_json(cls, data) -> PiecewiseLinearTrajectory:
        if isinstance(data, str):
            data = json.loads(data)
        if "waypoints" in data and "knots" in data:
            return cls(data["waypoints"], data["knots"])
        pieces = data["pieces"]
        knots = [pieces[0]["t0"]] + [p["t1"] for p in pieces]
        pts = [np.asarray(pieces[0]["a"]) + np.asarray(pieces[0]["b"]) * pieces[0]["t0"]]
        for p in pieces:
            pts.append(np.asarray(p["a"]) + np.asarray(p["b"]) * p["t1"])
        return cls(pts, knots)


@dataclass
class PolynomialTrajectory:
    """x(t) = sum_k coeffs[k] t^k on [t0, tf]; ``coeffs`` has shape (d + 1, n_x)."""

    coeffs: np.ndarray
    t0: float = 0.0
    tf: float = 1.0
    certificates: list = field(default_factory=list)

    def __post_init__(self):
        self.coeffs = np.atleast_2d(np.asarray(self.coeffs, dtype=float))

    @property
    def dim(self) -> int:
        return self.coeffs.shape[1]

    @property
    def horizon(self) -> tuple[float, float]:
        return (self.t0, self.tf)

    @property
    def polys(self) -> list[Polynomial]:
        return [Polynomial.from_univariate(self.coeffs[:, d]) for d in range(self.dim)]

    @property
    def pieces(self) -> list[PolynomialTrajectory]:
        return [self]

    @property
    def interval(self):
        return self.horizon

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        powers = np.stack([t ** k for k in range(len(self.coeffs))], axis=-1)
        return powers @ self.coeffs

    def length(self) -> float:
        return trajectory_length(self)

    def to_json(self) -> dict:
        return {"type": "polynomial", "coeffs": self.coeffs.tolist(), "t0": self.t0,
                "tf": self.tf, "length": self.length()}


def trajectory_length(traj) -> float:
    """Integral of |x'(t)|^2 over the horizon (the planning objective)."""
    if isinstance(traj, PiecewiseLinearTrajectory):
        return float(sum(np.dot(p.b, p.b) * (p.t1 - p.t0) for p in traj.pieces))
    if isinstance(traj, PolynomialTrajectory):
        total = Polynomial()
        for p in traj.polys:
            dp = p.derivative(T)
            total = total + dp * dp
        coeffs = total.univariate(T) if not total.is_zero() else np.zeros(1)
        antideriv = np.concatenate([[0.0], coeffs / np.arange(1, len(coeffs) + 1)])
        return float(np.polynomial.polynomial.polyval(traj.tf, antideriv)
                     - np.polynomial.polynomial.polyval(traj.t0, antideriv))
    raise TypeError(f"unsupported trajectory type {type(traj).__name__}")


def load_trajectory(data):
    if isinstance(data, str):
        data = json.loads(data)
    if data.get("type") == "polynomial":
        return PolynomialTrajectory(data["coeffs"], data.get("t0", 0.0), data.get("tf", 1.0))
    return PiecewiseLinearTrajectory.from_json(data)
