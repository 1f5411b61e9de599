"""RRT planners whose edges carry continuous-time safety certificates."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping

import networkx as nx
import numpy as np

from .cert import DEFAULT_CONFIG, Certificate, SolverConfig, Status, verify_segment
from .contour import FreeSpace
from .dist import DistributionSpec
from .poly import T, Var, x
from .trajectory import Piece, PiecewiseLinearTrajectory, trajectory_length

__all__ = [
    "NoPathFound", "PlannerConfig", "PlanRequest", "SearchTree", "PlanResult",
    "segment_polys", "rrt_sos_static", "rrt_sos_dynamic", "shortcut", "mc_rrt_baseline",
    "trajectory_length",
]


class NoPathFound(RuntimeError):
    pass


@dataclass(frozen=True)
class PlannerConfig:
    max_iterations: int = 5000
    step_size: float | None = None  # None: 5% of the workspace diagonal
    goal_bias: float = 0.05
    seed: int = 0
    init_line: bool = False
    init_line_growth: float = 1.002  # sampling band half-width multiplier per iteration


@dataclass
class PlanRequest:
    free: FreeSpace
    start: np.ndarray
    goal: np.ndarray
    horizon: tuple[float, float] = (0.0, 1.0)
    config: PlannerConfig = field(default_factory=PlannerConfig)
    solver: SolverConfig = DEFAULT_CONFIG

    def __post_init__(self):
        self.start = np.asarray(self.start, dtype=float)
        self.goal = np.asarray(self.goal, dtype=float)
        t0, tf = self.horizon
        if not t0 < tf:
            raise ValueError(f"horizon needs t0 < tf, got {self.horizon}")
        if self.start.shape != (self.free.dim,) or self.goal.shape != (self.free.dim,):
            raise ValueError("start and goal must match the workspace dimension")

    @property
    def step(self) -> float:
        s = self.config.step_size
        return 0.05 * self.free.diagonal if s is None else float(s)


@dataclass
class SearchTree:
    """Nodes with parent links; for dynamic planning ``levels[i]`` is the interval index reached."""

    nodes: list[np.ndarray] = field(default_factory=list)
    parents: list[int] = field(default_factory=list)
    levels: list[int] = field(default_factory=list)
    certificates: list[Certificate | None] = field(default_factory=list)

    def add(self, point, parent: int, level: int = 0, cert: Certificate | None = None) -> int:
        self.nodes.append(np.asarray(point, dtype=float))
        self.parents.append(parent)
        self.levels.append(level)
        self.certificates.append(cert)
        return len(self.nodes) - 1

    def __len__(self) -> int:
        return len(self.nodes)

    def points(self) -> np.ndarray:
        return np.array(self.nodes)

    def edges(self):
        """(parent, child, certificate) for every edge."""
        return [(p, i, self.certificates[i]) for i, p in enumerate(self.parents) if p >= 0]

    def path_to(self, i: int) -> list[int]:
        out = []
        while i >= 0:
            out.append(i)
            i = self.parents[i]
        return out[::-1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d = len(self.nodes[0]) if self.nodes else 0
        w.writerow(["parent", "child", "level"]
                   + [f"{e}{k + 1}" for e in ("from_x", "to_x") for k in range(d)]
                   + ["status", "margin"])
        for p, c, cert in self.edges():
            w.writerow([p, c, self.levels[c]] + [repr(float(v)) for v in self.nodes[p]]
                       + [repr(float(v)) for v in self.nodes[c]]
                       + [cert.status.value if cert else "", cert.margin if cert else ""])
        return buf.getvalue()


@dataclass
class PlanResult:
    trajectory: PiecewiseLinearTrajectory
    tree: SearchTree
    iterations: int
    wall_time: float
    edge_checks: int = 0
    edge_check_time: float = 0.0
    stats: dict = field(default_factory=dict)

    @property
    def mean_edge_check_time(self) -> float:
        return self.edge_check_time / max(self.edge_checks, 1)


def segment_polys(p, q, t1: float, t2: float):
    """Per-dimension polynomials of the straight piece p -> q traversed over [t1, t2]."""
    p, q = np.asarray(p, float), np.asarray(q, float)
    b = (q - p) / (t2 - t1)
    a = p - b * t1
    return Piece(a, b, t1, t2).polys


EdgeCheck = Callable[[np.ndarray, np.ndarray, float, float], Certificate]


def certificate_check(free: FreeSpace, solver: SolverConfig) -> EdgeCheck:
    def check(p, q, t1, t2):
        return verify_segment(segment_polys(p, q, t1, t2), (t1, t2), free, solver)
    return check


class _Sampler:
    """Uniform box sampling with goal bias and an optional straight-line band."""

    def __init__(self, req: PlanRequest, rng: np.random.Generator):
        self.req, self.rng = req, rng
        self.width = 0.05 * req.free.diagonal

    def __call__(self) -> np.ndarray:
        req, rng = self.req, self.rng
        lo, hi = req.free.lower, req.free.upper
        if req.config.init_line:
            s = rng.uniform()
            base = req.start + s * (req.goal - req.start)
            self.width = min(self.width * req.config.init_line_growth, req.free.diagonal)
            return np.clip(base + rng.uniform(-self.width, self.width, lo.size), lo, hi)
        return rng.uniform(lo, hi)


def _check_endpoints(req: PlanRequest) -> None:
    t0, tf = req.horizon
    free = req.free
    if not free.member(req.start, t0):
        raise NoPathFound("start lies outside the risk-bounded free space")
    if not free.member(req.goal, tf):
        raise NoPathFound("goal lies outside the risk-bounded free space")


def _timed(check: EdgeCheck, counters: dict) -> EdgeCheck:
    def wrapped(p, q, t1, t2):
        t = time.perf_counter()
        cert = check(p, q, t1, t2)
        counters["checks"] += 1
        counters["time"] += time.perf_counter() - t
        return cert
    return wrapped


def _grow_static(req: PlanRequest, check: EdgeCheck, point_ok=None):
    """Single-tree RRT; edges are checked on the normalized interval [0, 1].

    For time-invariant constraints the certificate does not depend on the timing
    of a straight piece, so a certified polyline stays certified under any
    monotone re-timing.
    """
    cfg = req.config
    rng = np.random.default_rng(cfg.seed)
    sampler = _Sampler(req, rng)
    point_ok = point_ok or (lambda q: bool(req.free.member(q)))
    counters = {"checks": 0, "time": 0.0}
    check = _timed(check, counters)
    tree = SearchTree()
    tree.add(req.start, -1)

    def try_goal(i):
        if np.allclose(tree.nodes[i], req.goal):
            return None
        cert = check(tree.nodes[i], req.goal, 0.0, 1.0)
        return cert if cert.verified else None

    goal_cert = try_goal(0)
    it = 0
    leaf = 0
    while goal_cert is None and it < cfg.max_iterations:
        it += 1
        q = req.goal.copy() if rng.uniform() < cfg.goal_bias else sampler()
        pts = tree.points()
        near = int(np.argmin(np.linalg.norm(pts - q, axis=1)))
        d = q - pts[near]
        dist = float(np.linalg.norm(d))
        if dist < 1e-12:
            continue
        if dist > req.step:
            q = pts[near] + d * (req.step / dist)
        if not point_ok(q):
            continue
        cert = check(pts[near], q, 0.0, 1.0)
        if not cert.verified:
            continue
        leaf = tree.add(q, near, cert=cert)
        goal_cert = try_goal(leaf)
    if goal_cert is None:
        raise NoPathFound(f"no certified path after {it} iterations")
    goal = tree.add(req.goal, leaf, cert=goal_cert)
    return tree, goal, it, counters


def _assemble_static(req: PlanRequest, tree: SearchTree, path: list[int], certs):
    t0, tf = req.horizon
    traj = PiecewiseLinearTrajectory.by_arclength([tree.nodes[i] for i in path], t0, tf)
    traj.certificates = [_retime(c, iv) for c, iv in zip(certs, zip(traj.knots[:-1], traj.knots[1:]))]
    return traj


def _retime(cert: Certificate, interval) -> Certificate:
    return Certificate(cert.status, cert.results, (float(interval[0]), float(interval[1])),
                       cert.solve_time, cert.kind)


def rrt_sos_static(req: PlanRequest, check: EdgeCheck | None = None) -> PlanResult:
    """RRT over a time-invariant free space with certified straight edges.

    The returned polyline is timed at constant speed, which minimizes the
    integral of |x'|^2 for its geometry.
    """
    if req.free.time_varying:
        raise ValueError("free space is time-varying; use rrt_sos_dynamic")
    _check_endpoints(req)
    start = time.perf_counter()
    check = check or certificate_check(req.free, req.solver)
    tree, goal, it, counters = _grow_static(req, check)
    path = tree.path_to(goal)
    traj = _assemble_static(req, tree, path, [tree.certificates[i] for i in path[1:]])
    return PlanResult(traj, tree, it, time.perf_counter() - start,
                      counters["checks"], counters["time"])


def rrt_sos_dynamic(req: PlanRequest, s: int, check: EdgeCheck | None = None) -> PlanResult:
    """Level-structured RRT: a node at level i is reached at t_i = t0 + i (tf - t0) / s.

    Parents of a level-i node come only from level i - 1, and every edge is
    certified on its own interval against the time-varying contours. Nodes at
    level s - 1 attempt the final connection to the goal.
    """
    if s < 1:
        raise ValueError("piece count s must be at least 1")
    _check_endpoints(req)
    start = time.perf_counter()
    cfg = req.config
    rng = np.random.default_rng(cfg.seed)
    sampler = _Sampler(req, rng)
    counters = {"checks": 0, "time": 0.0}
    check = _timed(check or certificate_check(req.free, req.solver), counters)
    t0, tf = req.horizon
    knots = t0 + (tf - t0) * np.arange(s + 1) / s
    tree = SearchTree()
    tree.add(req.start, -1, level=0)

    def try_goal(i):
        cert = check(tree.nodes[i], req.goal, knots[s - 1], knots[s])
        return cert if cert.verified else None

    goal_cert = try_goal(0) if s == 1 else None
    leaf, it = 0, 0
    while goal_cert is None and it < cfg.max_iterations and s > 1:
        it += 1
        levels = np.array(tree.levels)
        if rng.uniform() < cfg.goal_bias:
            # bias toward the straight start-goal line at a random interior level
            lvl = int(rng.integers(1, s))
            q = req.start + (req.goal - req.start) * lvl / s
            cand = np.flatnonzero(levels == lvl - 1)
        else:
            q = sampler()
            cand = np.flatnonzero(levels <= s - 2)
        if cand.size == 0:
            continue
        pts = tree.points()[cand]
        near = int(cand[np.argmin(np.linalg.norm(pts - q, axis=1))])
        lvl = tree.levels[near] + 1
        if not req.free.member(q, knots[lvl]):
            continue
        cert = check(tree.nodes[near], q, knots[lvl - 1], knots[lvl])
        if not cert.verified:
            continue
        child = tree.add(q, near, level=lvl, cert=cert)
        if lvl == s - 1:
            goal_cert = try_goal(child)
            leaf = child
    if goal_cert is None:
        raise NoPathFound(f"no certified {s}-piece path after {it} iterations")
    goal = tree.add(req.goal, leaf, level=s, cert=goal_cert)
    path = tree.path_to(goal)
    traj = PiecewiseLinearTrajectory([tree.nodes[i] for i in path], knots,
                                     [tree.certificates[i] for i in path[1:]])
    return PlanResult(traj, tree, it, time.perf_counter() - start,
                      counters["checks"], counters["time"])


def shortcut(tree: SearchTree, free: FreeSpace, horizon=(0.0, 1.0),
             solver: SolverConfig = DEFAULT_CONFIG, goal: int | None = None,
             check: EdgeCheck | None = None) -> PiecewiseLinearTrajectory:
    """Shortest certified path over the roadmap of all tree vertices.

    The roadmap contains every vertex pair whose straight connection certifies.
    Edges are certified lazily: Dijkstra runs on the complete Euclidean graph,
    uncertified edges on the returned path are checked, failures are removed,
    and the search repeats. The result equals Dijkstra on the fully certified
    roadmap while solving far fewer programs.
    """
    if free.time_varying:
        raise ValueError("shortcut applies to time-invariant free spaces")
    check = check or certificate_check(free, solver)
    goal = len(tree) - 1 if goal is None else goal
    pts = tree.points()
    g = nx.Graph()
    n = len(pts)
    for i in range(n):
        for j in range(i + 1, n):
            g.add_edge(i, j, weight=float(np.linalg.norm(pts[i] - pts[j])))
    known: dict[tuple[int, int], Certificate] = {}
    for p, c, cert in tree.edges():
        if cert is not None and cert.verified:
            known[(min(p, c), max(p, c))] = cert
    while True:
        path = nx.dijkstra_path(g, 0, goal)
        ok = True
        for i, j in zip(path[:-1], path[1:]):
            key = (min(i, j), max(i, j))
            if key in known:
                continue
            cert = check(pts[i], pts[j], 0.0, 1.0)
            if cert.verified:
                known[key] = cert
            else:
                g.remove_edge(i, j)
                ok = False
                break
        if ok:
            break
    certs = [known[(min(i, j), max(i, j))] for i, j in zip(path[:-1], path[1:])]
    t0, tf = horizon
    traj = PiecewiseLinearTrajectory.by_arclength(pts[path], t0, tf)
    traj.certificates = [_retime(c, iv) for c, iv in zip(certs, zip(traj.knots[:-1], traj.knots[1:]))]
    return traj


# -- Monte Carlo baseline --------------------------------------------------------

def sampled_check(free: FreeSpace, dists: Mapping[Var, DistributionSpec], delta: float,
                  n_samples: int, n_waypoints: int, rng: np.random.Generator) -> EdgeCheck:
    """Edge test from a handful of uncertainty draws at discrete waypoints (no guarantee)."""
    bodies = [o.body for o in free.obstacles]

    def check(p, q, t1, t2):
        s = np.linspace(0.0, 1.0, n_waypoints)
        pts = np.asarray(p)[None, :] + s[:, None] * (np.asarray(q) - np.asarray(p))[None, :]
        ts = t1 + s * (t2 - t1)
        ok = bool(np.all(free.in_box(pts)))
        if ok:
            draws = {v: d.sample(rng, n_samples) for v, d in dists.items()}
            for body in bodies:
                asg = {x(i + 1): pts[:, i, None] for i in range(pts.shape[1])}
                asg[T] = ts[:, None]
                for v in body.free_variables():
                    if v in draws:
                        asg[v] = draws[v][None, :]
                hits = np.asarray(body.eval(asg)) >= 0
                risk = np.broadcast_to(hits, (n_waypoints, n_samples)).mean(axis=1)
                if np.any(risk > delta):
                    ok = False
                    break
        status = Status.VERIFIED if ok else Status.NOT_VERIFIED
        return Certificate(status, [], (t1, t2), 0.0, kind="sampled")

    return check


def mc_rrt_baseline(req: PlanRequest, dists: Mapping[Var, DistributionSpec], delta: float,
                    n_samples: int = 10, n_waypoints: int = 20) -> PlanResult:
    """RRT with the sampled edge test; mirrors rrt_sos_static/dynamic otherwise."""
    rng = np.random.default_rng(np.random.SeedSequence([req.config.seed, 0xBA5E]))
    check = sampled_check(req.free, dists, delta, n_samples, n_waypoints, rng)
    start = time.perf_counter()
    if req.free.time_varying:
        res = rrt_sos_dynamic(req, 2, check)
    else:
        _check_endpoints(req)
        tree, goal, it, counters = _grow_static(req, check)
        path = tree.path_to(goal)
        t0, tf = req.horizon
        traj = PiecewiseLinearTrajectory.by_arclength([tree.nodes[i] for i in path], t0, tf)
        res = PlanResult(traj, tree, it, 0.0, counters["checks"], counters["time"])
    res.wall_time = time.perf_counter() - start
    res.trajectory.certificates = [None] * len(res.trajectory)
    res.stats.update(n_samples=n_samples, n_waypoints=n_waypoints)
    return res


def recertify(traj: PiecewiseLinearTrajectory, free: FreeSpace,
              solver: SolverConfig = DEFAULT_CONFIG) -> list[Certificate]:
    """Certificate for each piece on its own interval."""
    return [verify_segment(p, p.interval, free, solver) for p in traj.pieces]
