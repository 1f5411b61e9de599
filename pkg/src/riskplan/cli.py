"""``riskplan contour|plan|tube|verify|mc <scenario.json> [flags]``.

Exit codes: 0 success, 2 malformed input, 3 infeasible (no path, no tube,
certificate not verified, oracle bound exceeded), 4 solver failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, plotting
from .cert import Status, verify_segment, verify_tube
from .contour import grid_export, grid_to_csv
from .oracle import mc_trajectory_risk, mc_tube_risk
from .plan import NoPathFound, mc_rrt_baseline, rrt_sos_dynamic, rrt_sos_static, shortcut
from .poly import PolyError
from .scenario import Scenario, ScenarioError, load_scenario
from .trajectory import load_trajectory
from .tube import Tube, TubeFail, plan_with_tube, subdivide_and_tube

EXIT_OK, EXIT_PARSE, EXIT_INFEASIBLE, EXIT_SOLVER = 0, 2, 3, 4


class SolverFailure(RuntimeError):
    pass


class Infeasible(RuntimeError):
    pass


def _write_json(path: Path, data) -> Path:
    path.write_text(json.dumps(data, indent=2, sort_keys=False) + "\n")
    return path


def _cert_summary(certs) -> list[dict]:
    return [c.to_json() if c is not None else None for c in certs]


def _status_of(certs) -> Status:
    if any(c is not None and c.status is Status.SOLVER_ERROR for c in certs):
        return Status.SOLVER_ERROR
    if all(c is not None and c.verified for c in certs):
        return Status.VERIFIED
    return Status.NOT_VERIFIED


class Run:
    """Collects outputs and timings for the run report."""

    def __init__(self, command: str, sc: Scenario, out: Path, argv):
        self.command, self.sc, self.out = command, sc, out
        self.argv = list(argv)
        self.outputs: dict[str, str] = {}
        self.timings: dict[str, float] = {}
        self.certificates: list = []
        self.oracle: dict = {}
        self.extra: dict = {}
        out.mkdir(parents=True, exist_ok=True)

    def file(self, key: str, name: str) -> Path:
        p = self.out / name
        self.outputs[key] = str(p)
        return p

    def report(self, status: str) -> Path:
        data = {
            "command": self.command, "status": status, "version": __version__,
            "scenario": self.sc.name, "scenario_hash": self.sc.digest, "argv": self.argv,
            "outputs": self.outputs, "timings": self.timings,
            "certificates": self.certificates, "oracle": self.oracle, **self.extra,
        }
        return _write_json(self.out / "report.json", data)


def _free(sc: Scenario, args):
    return sc.free_space(args.delta)


def cmd_contour(sc: Scenario, args, run: Run) -> int:
    block = sc.contour
    deltas = args.deltas or block.get("deltas") or [sc.delta]
    times = args.times or block.get("times") or [0.0]
    res = args.resolution or int(block.get("resolution", 101))
    bounds = (sc.lower, sc.upper)
    grids = []
    contours_json = []
    t0 = time.perf_counter()
    for d in deltas:
        free = sc.free_space(d)
        for c in free.contours:
            contours_json.append(c.to_json())
            for tt in (times if c.time_varying else [None]):
                cols = grid_export(c, bounds, res, tt)
                tag = f"{c.name}_delta{d:g}" + (f"_t{tt:g}" if tt is not None else "")
                with open(run.file(f"grid:{tag}", f"grid_{tag}.csv"), "w") as fh:
                    grid_to_csv(cols, fh)
                label = f"{c.name} Δ={d:g}" + (f" t={tt:g}" if tt is not None else "")
                grids.append((label, cols, res))
    run.timings["contour"] = time.perf_counter() - t0
    _write_json(run.file("contours", "contours.json"), contours_json)
    if not args.no_figures and sc.dim == 2:
        plotting.contour_figure(grids, run.file("figure", "contours.png"))
    run.extra["grids"] = len(grids)
    run.report("ok")
    return EXIT_OK


def _plan(sc: Scenario, args, run: Run):
    solver = sc.solver_config(args.deg_cap, args.solver_tol)
    req = sc.plan_request(args.delta, solver, seed=args.seed, max_iterations=args.max_iter,
                          step_size=args.step, goal_bias=args.goal_bias,
                          init_line=True if args.init_line else None)
    pieces = args.pieces or sc.pieces
    t0 = time.perf_counter()
    res = rrt_sos_dynamic(req, pieces) if req.free.time_varying else rrt_sos_static(req)
    run.timings["plan"] = time.perf_counter() - t0
    run.extra["iterations"] = res.iterations
    run.extra["edge_checks"] = res.edge_checks
    run.timings["mean_edge_check"] = res.mean_edge_check_time
    traj = res.trajectory
    if args.shortcut and not req.free.time_varying:
        t0 = time.perf_counter()
        traj = shortcut(res.tree, req.free, req.horizon, req.solver)
        run.timings["shortcut"] = time.perf_counter() - t0
    return req, res, traj


def cmd_plan(sc: Scenario, args, run: Run) -> int:
    req, res, traj = _plan(sc, args, run)
    _write_json(run.file("trajectory", "trajectory.json"), traj.to_json())
    run.file("tree", "tree.csv").write_text(res.tree.to_csv())
    run.certificates = _cert_summary(traj.certificates)
    if args.baseline:
        t0 = time.perf_counter()
        base = mc_rrt_baseline(req, sc.dists, args.delta if args.delta is not None else sc.delta,
                               args.n_samples, args.n_waypoints)
        run.timings["baseline"] = time.perf_counter() - t0
        run.timings["baseline_mean_edge_check"] = base.mean_edge_check_time
        _write_json(run.file("baseline", "baseline_trajectory.json"), base.trajectory.to_json())
        ratio = res.mean_edge_check_time / max(base.mean_edge_check_time, 1e-12)
        run.extra["edge_check_ratio_certificate_over_baseline"] = ratio
    if not args.no_figures:
        plotting.plan_figure(req.free, traj, res.tree, sc.start, sc.goal, run.file("figure", "plan.png"))
    run.report("certified" if traj.certified else "not certified")
    return EXIT_OK if traj.certified else EXIT_INFEASIBLE


def cmd_tube(sc: Scenario, args, run: Run) -> int:
    cfg = sc.tube_config(args.c_max, args.eps, args.r_min, args.profile, args.a, args.b,
                         args.direction)
    method = args.method or (2 if cfg.r_min > 0 and not args.trajectory else 1)
    solver = sc.solver_config(args.deg_cap, args.solver_tol)
    t0 = time.perf_counter()
    failures = []
    if method == 2:
        req = sc.plan_request(args.delta, solver, seed=args.seed, max_iterations=args.max_iter,
                              step_size=args.step, goal_bias=args.goal_bias)
        tp = plan_with_tube(req, cfg, args.pieces or sc.pieces)
        traj, free = tp.trajectory, req.free
        results = tp.tubes
    else:
        free = sc.free_space(args.delta)
        if args.trajectory:
            traj = load_trajectory(json.loads(Path(args.trajectory).read_text()))
        else:
            _, _, traj = _plan(sc, args, run)
        split = args.subdivide_last or int(sc.tube.get("subdivide_last", 0))
        knots = []
        if split > 1:
            a, b = traj.knots[-2], traj.knots[-1]
            knots = list(a + (b - a) * np.arange(1, split) / split)
        results = []
        for r in subdivide_and_tube(traj, knots, free, cfg, solver):
            (failures if isinstance(r, TubeFail) else results).append(r)
    run.timings["tube"] = time.perf_counter() - t0
    tubes = [r.tube for r in results]
    _write_json(run.file("tubes", "tubes.json"), {
        "trajectory": traj.to_json(),
        "tubes": [t.to_json() for t in tubes],
        "failures": [str(f) for f in failures],
        "min_radius": min((t.min_radius for t in tubes), default=None),
        "method": method,
    })
    run.certificates = _cert_summary([t.certificate for t in tubes])
    run.extra["search"] = [{"c": r.c, "upper": r.upper, "evaluations": r.evaluations} for r in results]
    if not args.no_figures:
        plotting.tube_figure(free, tubes, traj, sc.start, sc.goal, run.file("figure", "tube.png"))
    ok = not failures and all(t.certified for t in tubes)
    run.report("certified" if ok else "failed")
    return EXIT_OK if ok else EXIT_INFEASIBLE


def _load_artifact(path: str):
    data = json.loads(Path(path).read_text())
    if "tubes" in data:
        return "tubes", [Tube.from_json(t) for t in data["tubes"]]
    return "trajectory", load_trajectory(data)


def cmd_verify(sc: Scenario, args, run: Run) -> int:
    kind, obj = _load_artifact(args.artifact)
    free = _free(sc, args)
    solver = sc.solver_config(args.deg_cap, args.solver_tol)
    t0 = time.perf_counter()
    if kind == "tubes":
        certs = [verify_tube(t.center, t.radius_poly(), t.interval, free, solver) for t in obj]
    else:
        certs = [verify_segment(p, p.interval, free, solver) for p in obj.pieces]
    run.timings["verify"] = time.perf_counter() - t0
    status = _status_of(certs)
    run.certificates = _cert_summary(certs)
    _write_json(run.file("certificates", "certificates.json"),
                {"status": status.value, "kind": kind,
                 "pieces": [c.to_json(timing=False) for c in certs]})
    run.report(status.value)
    if status is Status.SOLVER_ERROR:
        return EXIT_SOLVER
    return EXIT_OK if status is Status.VERIFIED else EXIT_INFEASIBLE


def cmd_mc(sc: Scenario, args, run: Run) -> int:
    kind, obj = _load_artifact(args.artifact)
    o = sc.oracle
    n_omega = args.n_omega or int(o.get("n_omega", 10_000 if kind == "tubes" else 100_000))
    n_t = args.n_t or int(o.get("n_t", 100 if kind == "tubes" else 1000))
    n_x = args.n_x or int(o.get("n_x", 100))
    seed = sc.seed if args.seed is None else args.seed
    delta = sc.delta if args.delta is None else args.delta
    t0 = time.perf_counter()
    if kind == "tubes":
        rep = mc_tube_risk(obj, sc.obstacles, sc.dists, n_omega, n_t, n_x, seed)
    else:
        rep = mc_trajectory_risk(obj, sc.obstacles, sc.dists, n_omega, n_t, seed)
    run.timings["mc"] = time.perf_counter() - t0
    within = all(r["max_risk"] <= delta + 3 * r["se"] for r in rep.values())
    run.oracle = {"kind": kind, "delta": delta, "within_bound": within, "obstacles": rep}
    _write_json(run.file("oracle", "oracle.json"), run.oracle)
    run.report("within bound" if within else "bound exceeded")
    return EXIT_OK if within else EXIT_INFEASIBLE


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="riskplan", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("scenario", help="scenario JSON path or bundled scenario name")
        sp.add_argument("--out", type=Path, default=None, help="output directory")
        sp.add_argument("--delta", type=float, default=None, help="override the risk level")
        sp.add_argument("--deg-cap", type=int, default=None, help="certificate degree cap")
        sp.add_argument("--solver-tol", type=float, default=None, help="conic solver tolerance")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--no-figures", action="store_true", help="skip PNG figures")

    def planner(sp):
        sp.add_argument("--pieces", type=int, default=None, help="piece count for dynamic scenarios")
        sp.add_argument("--max-iter", type=int, default=None)
        sp.add_argument("--step", type=float, default=None)
        sp.add_argument("--goal-bias", type=float, default=None)
        sp.add_argument("--init-line", action="store_true", help="sample around the start-goal line")
        sp.add_argument("--shortcut", action="store_true", help="shorten via the certified roadmap")

    sp = sub.add_parser("contour", help="export risk contour grids")
    common(sp)
    sp.add_argument("--deltas", type=float, nargs="+", default=None)
    sp.add_argument("--times", type=float, nargs="+", default=None)
    sp.add_argument("--resolution", type=int, default=None)

    sp = sub.add_parser("plan", help="plan a certified trajectory")
    common(sp)
    planner(sp)
    sp.add_argument("--baseline", action="store_true", help="also run the sampled-check RRT")
    sp.add_argument("--n-samples", type=int, default=10)
    sp.add_argument("--n-waypoints", type=int, default=20)

    sp = sub.add_parser("tube", help="build certified tubes")
    common(sp)
    planner(sp)
    sp.add_argument("--trajectory", default=None, help="trajectory JSON to wrap (method 1)")
    sp.add_argument("--method", type=int, choices=(1, 2), default=None)
    sp.add_argument("--r-min", type=float, default=None)
    sp.add_argument("--c-max", type=float, default=None)
    sp.add_argument("--eps", type=float, default=None)
    sp.add_argument("--profile", choices=("constant", "linear", "quadratic"), default=None)
    sp.add_argument("--a", type=float, default=None, help="profile slope/curvature")
    sp.add_argument("--b", type=float, default=None, help="quadratic profile vertex time")
    sp.add_argument("--direction", choices=("increasing", "decreasing"), default=None)
    sp.add_argument("--subdivide-last", type=int, default=None,
                    help="split the last piece into this many tubes")

    sp = sub.add_parser("verify", help="certify a trajectory or tube JSON")
    common(sp)
    sp.add_argument("artifact", help="trajectory.json or tubes.json")

    sp = sub.add_parser("mc", help="Monte Carlo risk of a trajectory or tube JSON")
    common(sp)
    sp.add_argument("artifact", help="trajectory.json or tubes.json")
    sp.add_argument("--n-omega", type=int, default=None)
    sp.add_argument("--n-t", type=int, default=None)
    sp.add_argument("--n-x", type=int, default=None)
    return p


COMMANDS = {"contour": cmd_contour, "plan": cmd_plan, "tube": cmd_tube, "verify": cmd_verify,
            "mc": cmd_mc}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    try:
        sc = load_scenario(args.scenario)
    except (ScenarioError, PolyError, OSError) as exc:
        print(f"riskplan: {exc}", file=sys.stderr)
        return EXIT_PARSE
    out = args.out or Path("riskplan_out") / f"{sc.name}_{args.command}"
    run = Run(args.command, sc, out, argv)
    try:
        code = COMMANDS[args.command](sc, args, run)
    except (ScenarioError, PolyError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"riskplan: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (NoPathFound, TubeFail) as exc:
        print(f"riskplan: {exc}", file=sys.stderr)
        run.report(f"infeasible: {exc}")
        return EXIT_INFEASIBLE
    print(f"riskplan {args.command}: wrote {out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
