"""Static and dynamic risk contours built from obstacle polynomials and moments.

A contour at risk level ``delta`` is stored in cleared polynomial form::

    cantelli = (1 - delta) * E[P^2] - E[P]^2 <= 0   and   mean = E[P] <= 0

Because E[P^2] >= 0 pointwise this is equivalent to the rational bound
``(E[P^2] - E[P]^2) / E[P^2] <= delta`` wherever E[P^2] > 0. Points with
E[P^2] = 0 are decided by the mean condition alone.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dist import DistributionSpec, MomentTable, expectation
from .poly import T, Kind, Polynomial, Var, x


class MissingTime(ValueError):
    pass


@dataclass(frozen=True)
class Obstacle:
    """Obstacle set {x : body(x, w[, t]) >= 0}."""

    name: str
    body: Polynomial

    @property
    def dynamic(self) -> bool:
        return self.body.has_kind(Kind.TIME)

    @property
    def uncertain_vars(self) -> list[Var]:
        return sorted(v for v in self.body.free_variables() if v.kind is Kind.UNCERTAIN)


@dataclass(frozen=True)
class RiskContour:
    delta: float
    mean_poly: Polynomial
    second_moment: Polynomial
    cantelli_poly: Polynomial
    time_varying: bool
    name: str = ""

    def _assignment(self, point, t):
        point = np.asarray(point, dtype=float)
        asg = {x(i + 1): point[..., i] for i in range(point.shape[-1])}
        if self.time_varying:
            if t is None:
                raise MissingTime(f"contour {self.name!r} is time-varying; pass t")
            asg[T] = t
        return asg

    def values(self, point, t=None):
        """(cantelli, mean) evaluated at point(s) of shape (..., n_x)."""
        asg = self._assignment(point, t)
        shape = np.shape(point)[:-1]
        c = np.broadcast_to(self.cantelli_poly.eval(asg), shape) if shape else self.cantelli_poly.eval(asg)
        m = np.broadcast_to(self.mean_poly.eval(asg), shape) if shape else self.mean_poly.eval(asg)
        return c, m

    def member(self, point, t=None):
        c, m = self.values(point, t)
        return np.logical_and(c <= 0, m <= 0)

    def risk_bound(self, point, t=None):
        """The Cantelli ratio (E[P^2] - E[P]^2) / E[P^2]; nan where E[P] > 0."""
        asg = self._assignment(point, t)
        m = np.asarray(self.mean_poly.eval(asg), dtype=float)
        s = np.asarray(self.second_moment.eval(asg), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(s > 0, (s - m * m) / s, 0.0)
        return np.where(m <= 0, ratio, np.nan)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "delta": self.delta,
            "time_varying": self.time_varying,
            "mean": self.mean_poly.to_json(),
            "second_moment": self.second_moment.to_json(),
            "cantelli": self.cantelli_poly.to_json(),
        }


def build_contour(obs: Obstacle, delta: float, moments: MomentTable | Mapping[Var, DistributionSpec]
                  ) -> RiskContour:
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"risk level must lie in [0, 1], got {delta}")
    if not isinstance(moments, MomentTable):
        moments = MomentTable.for_polynomial(moments, obs.body, power=2)
    mean = expectation(obs.body, moments)
    second = expectation(obs.body * obs.body, moments)
    cantelli = second.scale(1.0 - delta) - mean * mean
    return RiskContour(delta, mean, second, cantelli, obs.dynamic, obs.name)


@dataclass(frozen=True)
class Constraint:
    """A requirement g >= 0 over the safe set."""

    name: str
    poly: Polynomial
    source: str  # obstacle name or "box"


@dataclass
class FreeSpace:
    contours: list[RiskContour]
    lower: np.ndarray
    upper: np.ndarray
    obstacles: list[Obstacle] = field(default_factory=list)

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != self.upper.shape or np.any(self.lower >= self.upper):
            raise ValueError("workspace box needs lower < upper in every dimension")

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def time_varying(self) -> bool:
        return any(c.time_varying for c in self.contours)

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    def constraints(self, include_box: bool = True) -> list[Constraint]:
        out = []
        for c in self.contours:
            out.append(Constraint(f"{c.name}:cantelli", -c.cantelli_poly, c.name))
            out.append(Constraint(f"{c.name}:mean", -c.mean_poly, c.name))
        if include_box:
            for i in range(self.dim):
                xi = Polynomial.var(x(i + 1))
                out.append(Constraint(f"box:x{i + 1}>=lo", xi - float(self.lower[i]), "box"))
                out.append(Constraint(f"box:x{i + 1}<=hi", float(self.upper[i]) - xi, "box"))
        return out

    def in_box(self, point) -> np.ndarray:
        p = np.asarray(point, dtype=float)
        return np.all((p >= self.lower) & (p <= self.upper), axis=-1)

    def member(self, point, t=None):
        ok = self.in_box(point)
        for c in self.contours:
            ok = np.logical_and(ok, c.member(point, t if c.time_varying else None))
        return ok


def membership(c: RiskContour, point, t: float | None = None):
    return c.member(point, t)


def grid_points(lower: Sequence[float], upper: Sequence[float], resolution: int) -> np.ndarray:
    """Row-major grid (last coordinate fastest) of shape (resolution**n, n)."""
    if resolution < 2:
        raise ValueError("grid resolution must be at least 2 per axis")
    axes = [np.linspace(lo, hi, resolution) for lo, hi in zip(lower, upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def grid_export(c: RiskContour, bounds, resolution: int, t: float | None = None) -> dict:
    """Evaluate a contour on a grid; returns column arrays keyed like the CSV header."""
    lower, upper = bounds
    pts = grid_points(lower, upper, resolution)
    cant, mean = c.values(pts, t if c.time_varying else None)
    cols = {f"x{i + 1}": pts[:, i] for i in range(pts.shape[1])}
    if t is not None:
        cols["t"] = np.full(len(pts), float(t))
    cols["member"] = ((cant <= 0) & (mean <= 0)).astype(int)
    cols["cantelli"] = np.asarray(cant, dtype=float)
    cols["mean"] = np.asarray(mean, dtype=float)
    return cols


def grid_to_csv(cols: dict, fh: io.TextIOBase | None = None) -> str:
    out = fh or io.StringIO()
    names = list(cols)
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(names)
    n = len(cols[names[0]])
    for i in range(n):
        writer.writerow([int(cols[k][i]) if k == "member" else repr(float(cols[k][i]))
                         for k in names])
    return out.getvalue() if fh is None else ""
