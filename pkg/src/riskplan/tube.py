"""Ball tubes around trajectories and the bisection search for their size."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .cert import DEFAULT_CONFIG, Certificate, SolverConfig, tube_slice_poly, verify_tube
from .contour import FreeSpace
from .plan import (NoPathFound, PlanRequest, PlanResult, _assemble_static, _check_endpoints,
                   _grow_static, rrt_sos_dynamic, segment_polys)
from .poly import T, Polynomial
from .trajectory import PiecewiseLinearTrajectory, trajectory_length

__all__ = [
    "Constant", "Linear", "Quadratic", "profile_from_json", "Tube", "TubeSearchConfig",
    "TubeFail", "Bisection", "bisect_max", "build_tube", "verify_tube_size", "plan_with_tube",
    "tube_objective", "subdivide_and_tube",
]


class TubeFail(RuntimeError):
    """The degenerate tube (lowest search parameter) could not be certified."""


# -- radius profiles, written in normalized time s in [0, 1] over the tube interval --

@dataclass(frozen=True)
class Constant:
    c: float = 0.0
    kind = "constant"

    def poly(self) -> Polynomial:
        return Polynomial.const(self.c)

    def extremes(self) -> tuple[float, float]:
        return self.c, self.c

    def with_c(self, c: float):
        return replace(self, c=c)

    def to_json(self) -> dict:
        return {"kind": self.kind, "c": self.c}


@dataclass(frozen=True)
class Linear:
    """r(s) = a s + c ("increasing") or a (1 - s) + c ("decreasing")."""

    a: float
    c: float = 0.0
    direction: str = "increasing"
    kind = "linear"

    def __post_init__(self):
        if self.direction not in ("increasing", "decreasing"):
            raise ValueError(f"direction must be increasing or decreasing, got {self.direction!r}")
        if self.a < 0 or self.c < 0:
            raise ValueError("linear profile needs a >= 0 and c >= 0")

    def poly(self) -> Polynomial:
        s = Polynomial.var(T)
        ramp = s if self.direction == "increasing" else 1 - s
        return ramp.scale(self.a) + self.c

    def extremes(self) -> tuple[float, float]:
        return self.c, self.a + self.c

    def with_c(self, c: float):
        return replace(self, c=c)

    def to_json(self) -> dict:
        return {"kind": self.kind, "a": self.a, "c": self.c, "direction": self.direction}


@dataclass(frozen=True)
class Quadratic:
    """r(s) = a (s - b)^2 + c with a > 0, 0 <= b <= 1, c >= 0."""

    a: float
    b: float
    c: float = 0.0
    kind = "quadratic"

    def __post_init__(self):
        if not (self.a > 0 and 0 <= self.b <= 1 and self.c >= 0):
            raise ValueError("quadratic profile needs a > 0, 0 <= b <= 1, c >= 0")

    def poly(self) -> Polynomial:
        d = Polynomial.var(T) - self.b
        return (d * d).scale(self.a) + self.c

    def extremes(self) -> tuple[float, float]:
        return self.c, self.a * max(self.b, 1 - self.b) ** 2 + self.c

    def with_c(self, c: float):
        return replace(self, c=c)

    def to_json(self) -> dict:
        return {"kind": self.kind, "a": self.a, "b": self.b, "c": self.c}


Profile = Constant | Linear | Quadratic


def profile_from_json(d: dict) -> Profile:
    kind = d.get("kind", "constant")
    c = float(d.get("c", 0.0))
    if kind == "constant":
        return Constant(c)
    if kind == "linear":
        return Linear(float(d["a"]), c, d.get("direction", "increasing"))
    if kind == "quadratic":
        return Quadratic(float(d["a"]), float(d["b"]), c)
    raise ValueError(f"unknown tube profile {kind!r}")


def make_profile(kind: str, a: float | None = None, b: float | None = None,
                 direction: str = "increasing") -> Profile:
    """Profile with c = 0 from CLI-style arguments; shape parameters default to a=0.5 (linear) and a=1.5, b=0.5 (quadratic)."""
    if kind == "constant":
        return Constant()
    if kind == "linear":
        return Linear(0.5 if a is None else a, 0.0, direction)
    if kind == "quadratic":
        return Quadratic(1.5 if a is None else a, 0.5 if b is None else b)
    raise ValueError(f"unknown tube profile {kind!r}")


@dataclass
class Tube:
    """{x : |x - center(t)| <= r(t)} on ``interval``; r is the profile in normalized time."""

    center: list[Polynomial]
    profile: Profile
    interval: tuple[float, float]
    certificate: Certificate | None = None
    center_ref: str = ""

    def radius_poly(self) -> Polynomial:
        return _radius_on(self.profile, *self.interval)

    @property
    def h(self) -> Polynomial:
        return tube_slice_poly(self.center, self.radius_poly())

    def radius(self, t):
        t1, t2 = self.interval
        s = (np.asarray(t, dtype=float) - t1) / (t2 - t1)
        p = self.profile.poly()
        return np.broadcast_to(np.asarray(p.eval({T: s}), dtype=float), np.shape(s))

    def center_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.stack([np.broadcast_to(np.asarray(c.eval({T: t}), dtype=float), t.shape)
                         for c in self.center], axis=-1)

    @property
    def min_radius(self) -> float:
        return self.profile.extremes()[0]

    @property
    def max_radius(self) -> float:
        return self.profile.extremes()[1]

    @property
    def certified(self) -> bool:
        return self.certificate is not None and self.certificate.verified

    def to_json(self, timing: bool = False) -> dict:
        return {
            "profile": self.profile.to_json(),
            "interval": list(self.interval),
            "center": [p.to_json() for p in self.center],
            "center_trajectory_ref": self.center_ref,
            "certified": self.certified,
            "min_radius": self.min_radius,
            "max_radius": self.max_radius,
            "certificate": self.certificate.to_json(timing) if self.certificate else None,
        }

    @classmethod
    def from_json(cls, d: dict) -> Tube:
        return cls([Polynomial.from_json(p) for p in d["center"]], profile_from_json(d["profile"]),
                   tuple(d["interval"]), None, d.get("center_trajectory_ref", ""))


@dataclass(frozen=True)
class TubeSearchConfig:
    c_max: float
    eps: float = 1e-3
    profile: Profile = field(default_factory=Constant)
    r_min: float = 0.0
    w: float = 1.0  # weight of the size term in tube_objective; diagnostic only

    def __post_init__(self):
        if not 0 < self.eps < self.c_max:
            raise ValueError(f"need 0 < eps < c_max, got eps={self.eps}, c_max={self.c_max}")
        if not 0 <= self.r_min <= self.c_max:
            raise ValueError(f"need 0 <= r_min <= c_max, got r_min={self.r_min}, c_max={self.c_max}")


@dataclass
class Bisection:
    lo: float
    hi: float
    payload: object
    evaluations: int
    history: list[tuple[float, bool]]


def bisect_max(verify: Callable[[float], tuple[bool, object]], lo: float, hi: float,
               eps: float) -> Bisection | None:
    """Largest parameter in [lo, hi] accepted by ``verify``, to within eps.

    ``verify`` returns (accepted, payload). None means ``lo`` itself is rejected.
    The payload of the returned ``lo`` is kept so the caller never needs to
    re-run the final check.
    """
    ok, payload = verify(lo)
    history = [(lo, ok)]
    if not ok:
        return None
    while hi - lo > eps:
        mid = 0.5 * (lo + hi)
        ok, p = verify(mid)
        history.append((mid, ok))
        if ok:
            lo, payload = mid, p
        else:
            hi = mid
    return Bisection(lo, hi, payload, len(history), history)


def _center_polys(traj) -> list[Polynomial]:
    return list(getattr(traj, "polys", traj))


def verify_tube_size(traj, interval, free: FreeSpace, profile: Profile, c: float,
                     solver: SolverConfig = DEFAULT_CONFIG) -> bool:
    return _certify(traj, interval, free, profile, c, solver).verified


def _certify(traj, interval, free, profile, c, solver) -> Certificate:
    if c < 0:
        raise ValueError("tube parameter must be nonnegative")
    tube = Tube(_center_polys(traj), profile.with_c(c), tuple(interval))
    return verify_tube(tube.center, tube.radius_poly(), tube.interval, free, solver)


@dataclass
class TubeResult:
    tube: Tube
    c: float
    upper: float
    evaluations: int
    history: list[tuple[float, bool]]
    wall_time: float


def build_tube(traj, interval, free: FreeSpace, cfg: TubeSearchConfig,
               solver: SolverConfig = DEFAULT_CONFIG, lower: float = 0.0) -> TubeResult:
    """Bisection on the profile's c over [lower, c_max]; raises TubeFail when ``lower`` fails.

    The returned tube carries the certificate of the accepted parameter itself,
    so it is certified whether or not acceptance is monotone in c.
    """
    start = time.perf_counter()
    interval = tuple(map(float, interval))
    profile = cfg.profile

    def verify(c):
        cert = _certify(traj, interval, free, profile, c, solver)
        return cert.verified, cert

    res = bisect_max(verify, lower, cfg.c_max, cfg.eps)
    if res is None:
        raise TubeFail(f"no tube certified at c = {lower} on {interval}")
    tube = Tube(_center_polys(traj), profile.with_c(res.lo), interval, res.payload)
    return TubeResult(tube, res.lo, res.hi, res.evaluations, res.history,
                      time.perf_counter() - start)


def tube_objective(traj, tubes: Tube | Sequence[Tube], w: float) -> float:
    """Trajectory energy plus w / (min radius)^2, the ball-tube form of the eigenvalue term."""
    tubes = [tubes] if isinstance(tubes, Tube) else list(tubes)
    r = min(t.min_radius for t in tubes)
    energy = trajectory_length(traj)
    if w == 0:
        return energy
    return energy + (w / r ** 2 if r > 0 else math.inf)


def subdivide_and_tube(traj: PiecewiseLinearTrajectory, knots: Sequence[float], free: FreeSpace,
                       cfg: TubeSearchConfig, solver: SolverConfig = DEFAULT_CONFIG,
                       profiles: Sequence[Profile] | None = None) -> list[TubeResult | TubeFail]:
    """One build_tube per piece after inserting ``knots``; failures are returned in place."""
    pieces = traj.split(knots).pieces
    if profiles is not None and len(profiles) != len(pieces):
        raise ValueError(f"{len(profiles)} profiles given for {len(pieces)} pieces")
    out: list[TubeResult | TubeFail] = []
    for i, piece in enumerate(pieces):
        c = cfg if profiles is None else replace(cfg, profile=profiles[i])
        try:
            res = build_tube(piece, piece.interval, free, c, solver)
            res.tube.center_ref = f"piece[{i}]"
            out.append(res)
        except TubeFail as exc:
            out.append(exc)
    return out


@dataclass
class TubePlan:
    plan: PlanResult
    tubes: list[TubeResult]

    @property
    def trajectory(self) -> PiecewiseLinearTrajectory:
        return self.plan.trajectory

    @property
    def min_radius(self) -> float:
        return min(t.tube.min_radius for t in self.tubes)


def plan_with_tube(req: PlanRequest, cfg: TubeSearchConfig, s: int = 2) -> TubePlan:
    """Grow the tree with edges accepted only if the r_min tube around them certifies,
    then enlarge the tube along every piece of the found path.

    ``s`` is the piece count when the free space is time-varying. If the
    configured profile cannot be certified at c = r_min on some piece, that
    piece falls back to a constant profile.
    """
    if not cfg.r_min > 0:
        raise ValueError("plan_with_tube needs r_min > 0")
    floor = Constant(cfg.r_min)

    def check(p, q, t1, t2):
        return verify_tube(segment_polys(p, q, t1, t2), _radius_on(floor, t1, t2), (t1, t2),
                           req.free, req.solver)

    def point_ok(q, t=None):
        # the whole r_min ball must be in the workspace box
        return bool(req.free.member(q, t)) and bool(
            np.all(q - req.free.lower >= cfg.r_min) and np.all(req.free.upper - q >= cfg.r_min))

    start = time.perf_counter()
    if req.free.time_varying:
        plan = rrt_sos_dynamic(req, s, check)
    else:
        _check_endpoints(req)
        tree, goal, it, counters = _grow_static(req, check, point_ok)
        path = tree.path_to(goal)
        traj = _assemble_static(req, tree, path, [tree.certificates[i] for i in path[1:]])
        plan = PlanResult(traj, tree, it, 0.0, counters["checks"], counters["time"])
    tubes = []
    for i, piece in enumerate(plan.trajectory.pieces):
        try:
            res = build_tube(piece, piece.interval, req.free, cfg, req.solver, lower=cfg.r_min)
        except TubeFail:
            # the edge was accepted with a constant r_min tube, so this always certifies
            res = build_tube(piece, piece.interval, req.free, replace(cfg, profile=Constant()),
                             req.solver, lower=cfg.r_min)
        res.tube.center_ref = f"piece[{i}]"
        tubes.append(res)
    plan.wall_time = time.perf_counter() - start
    return TubePlan(plan, tubes)


def _radius_on(profile: Profile, t1: float, t2: float) -> Polynomial:
    s = Polynomial({(): -t1 / (t2 - t1), ((T, 1),): 1.0 / (t2 - t1)})
    return profile.poly().substitute({T: s})


__all__ += ["TubeResult", "TubePlan", "make_profile", "NoPathFound"]
