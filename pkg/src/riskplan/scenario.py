"""Scenario files: JSON problem descriptions with explicit schema versions."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from . import poly
from .cert import SolverConfig
from .contour import FreeSpace, Obstacle, build_contour
from .dist import DistributionSpec, from_json as dist_from_json
from .plan import PlannerConfig, PlanRequest
from .poly import Kind, Var, parse_var
from .tube import TubeSearchConfig, make_profile, profile_from_json

SCHEMA_VERSION = 1


class ScenarioError(poly.ParseError):
    """Malformed scenario; ``field`` names the offending entry."""

    def __init__(self, message: str, field: str = ""):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class UndeclaredVariable(ScenarioError):
    pass


class SchemaVersionMismatch(ScenarioError):
    pass


@dataclass
class Scenario:
    name: str
    lower: np.ndarray
    upper: np.ndarray
    dists: dict[Var, DistributionSpec]
    obstacles: list[Obstacle]
    delta: float
    start: np.ndarray
    goal: np.ndarray
    horizon: tuple[float, float] = (0.0, 1.0)
    planner: dict = field(default_factory=dict)
    tube: dict = field(default_factory=dict)
    oracle: dict = field(default_factory=dict)
    cert: dict = field(default_factory=dict)
    contour: dict = field(default_factory=dict)
    seed: int = 0
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def dynamic(self) -> bool:
        return any(o.dynamic for o in self.obstacles)

    @property
    def digest(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    def free_space(self, delta: float | None = None) -> FreeSpace:
        d = self.delta if delta is None else delta
        contours = [build_contour(o, d, self.dists) for o in self.obstacles]
        return FreeSpace(contours, self.lower, self.upper, list(self.obstacles))

    def solver_config(self, deg_cap: int | None = None, tol: float | None = None) -> SolverConfig:
        c = self.cert
        return SolverConfig(
            tol=float(tol if tol is not None else c.get("solver_tol", 1e-9)),
            deg_cap=deg_cap if deg_cap is not None else c.get("deg_cap"),
            extra_degree=int(c.get("extra_degree", 0)),
        )

    def planner_config(self, **overrides) -> PlannerConfig:
        p = dict(self.planner)
        p.update({k: v for k, v in overrides.items() if v is not None})
        return PlannerConfig(
            max_iterations=int(p.get("max_iterations", 5000)),
            step_size=p.get("step_size"),
            goal_bias=float(p.get("goal_bias", 0.05)),
            seed=int(p.get("seed", self.seed)),
            init_line=bool(p.get("init_line", False)),
        )

    def plan_request(self, delta: float | None = None, solver: SolverConfig | None = None,
                     **overrides) -> PlanRequest:
        return PlanRequest(self.free_space(delta), self.start, self.goal, self.horizon,
                           self.planner_config(**overrides), solver or self.solver_config())

    @property
    def pieces(self) -> int:
        return int(self.planner.get("pieces", 2))

    def tube_config(self, c_max=None, eps=None, r_min=None, profile=None, a=None, b=None,
                    direction=None) -> TubeSearchConfig:
        t = self.tube
        c_max = c_max if c_max is not None else t.get("c_max")
        if c_max is None:
            raise ScenarioError("tube commands need c_max (scenario or --c-max)", "tube.c_max")
        if profile is not None:
            prof = make_profile(profile, a, b, direction or "increasing")
        else:
            prof = profile_from_json(dict(t.get("profile", {"kind": "constant"}), c=0.0))
        return TubeSearchConfig(
            c_max=float(c_max),
            eps=float(eps if eps is not None else t.get("eps", 1e-3)),
            profile=prof,
            r_min=float(r_min if r_min is not None else t.get("r_min", 0.0)),
            w=float(t.get("w", 1.0)),
        )


def _vec(data, key, dim=None) -> np.ndarray:
    try:
        v = np.asarray(data[key], dtype=float)
    except KeyError:
        raise ScenarioError("missing required field", key) from None
    except (TypeError, ValueError):
        raise ScenarioError("expected a list of numbers", key) from None
    if v.ndim != 1 or (dim is not None and v.size != dim):
        raise ScenarioError(f"expected {dim or 'a'}-vector", key)
    return v


def parse_scenario(data: dict[str, Any], name: str = "") -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"expected {SCHEMA_VERSION}, got {version!r}", "schema_version")
    ws = data.get("workspace")
    if not isinstance(ws, dict):
        raise ScenarioError("missing workspace box", "workspace")
    lower, upper = _vec(ws, "lower"), _vec(ws, "upper")
    if lower.shape != upper.shape or np.any(lower >= upper):
        raise ScenarioError("need lower < upper in every dimension", "workspace")
    dim = lower.size

    dists: dict[Var, DistributionSpec] = {}
    for i, item in enumerate(data.get("uncertain", [])):
        where = f"uncertain[{i}]"
        try:
            v = parse_var(item["name"])
        except (KeyError, poly.ParseError, TypeError):
            raise ScenarioError("expected a name like 'w1'", f"{where}.name") from None
        if v.kind is not Kind.UNCERTAIN:
            raise ScenarioError(f"{item['name']!r} is not an uncertain variable", f"{where}.name")
        if v in dists:
            raise ScenarioError(f"{v.name} declared twice", f"{where}.name")
        try:
            dists[v] = dist_from_json(item.get("dist", {}))
        except ValueError as exc:
            raise ScenarioError(str(exc), f"{where}.dist") from None

    obstacles = []
    for i, item in enumerate(data.get("obstacles", [])):
        where = f"obstacles[{i}]"
        try:
            body = poly.parse(str(item["body"]))
        except KeyError:
            raise ScenarioError("missing body expression", f"{where}.body") from None
        except poly.ParseError as exc:
            raise ScenarioError(str(exc), f"{where}.body") from None
        for v in body.free_variables():
            if v.kind is Kind.UNCERTAIN and v not in dists:
                raise UndeclaredVariable(f"{v.name} has no declared distribution", f"{where}.body")
            if v.kind is Kind.STATE and v.index >= dim:
                raise UndeclaredVariable(f"{v.name} exceeds workspace dimension {dim}",
                                         f"{where}.body")
        obstacles.append(Obstacle(str(item.get("name", f"obs{i + 1}")), body))

    delta = data.get("delta")
    if not isinstance(delta, (int, float)) or not 0.0 <= delta <= 1.0:
        raise ScenarioError(f"risk level must be a number in [0, 1], got {delta!r}", "delta")
    start, goal = _vec(data, "start", dim), _vec(data, "goal", dim)
    if np.array_equal(start, goal):
        raise ScenarioError("start and goal coincide", "goal")
    horizon = tuple(float(v) for v in data.get("horizon", (0.0, 1.0)))
    if len(horizon) != 2 or not horizon[0] < horizon[1]:
        raise ScenarioError("need [t0, tf] with t0 < tf", "horizon")
    blocks = {}
    for key in ("planner", "tube", "oracle", "cert", "contour"):
        b = data.get(key, {})
        if not isinstance(b, dict):
            raise ScenarioError("expected an object", key)
        blocks[key] = b
    seed = data.get("seed", 0)
    if not isinstance(seed, int):
        raise ScenarioError("seed must be an integer", "seed")
    return Scenario(str(data.get("name", name)), lower, upper, dists, obstacles, float(delta),
                    start, goal, horizon, seed=seed, raw=data, **blocks)


def bundled_names() -> list[str]:
    root = resources.files("riskplan") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_scenario(path: str | Path) -> Scenario:
    """Load a scenario file; a bare name such as ``illus1`` resolves to a bundled scenario."""
    p = Path(path)
    if p.exists():
        text, name = p.read_text(), p.stem
    else:
        res = resources.files("riskplan") / "scenarios" / f"{p.stem}.json"
        if not res.is_file():
            raise ScenarioError(f"no such scenario file or bundled scenario: {path}")
        text, name = res.read_text(), p.stem
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_scenario(data, name)
