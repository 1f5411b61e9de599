import json

import numpy as np
import pytest

from oracles import binomial_bound, clearance, dense_tube_min
from riskplan.cert import SolverConfig, verify_segment
from riskplan.contour import FreeSpace
from riskplan.oracle import mc_tube_risk
from riskplan.plan import PlanRequest, rrt_sos_dynamic
from riskplan.poly import T
from riskplan.scenario import load_scenario
from riskplan.trajectory import PiecewiseLinearTrajectory
from riskplan.tube import (
    Constant, Linear, Quadratic, Tube, TubeFail, TubeSearchConfig, bisect_max, build_tube,
    make_profile, plan_with_tube, profile_from_json, subdivide_and_tube, tube_objective,
    verify_tube_size,
)

BAND = 0.05


@pytest.fixture(scope="module")
def illus5():
    sc = load_scenario("illus5")
    line = PiecewiseLinearTrajectory.uniform([[-1, 0], [1, 0]], 0, 1)
    return sc, sc.free_space(), line


def _cfg(profile, c_max=0.5):
    return TubeSearchConfig(c_max=c_max, eps=1e-3, profile=profile)


def test_illus5_constant(illus5):
    _, free, line = illus5
    mid = line.split([1 / 3, 2 / 3]).pieces[1]
    res = build_tube(mid, mid.interval, free, _cfg(Constant()))
    assert res.c == pytest.approx(0.3980, abs=BAND)
    assert res.upper - res.c <= 1e-3
    assert res.tube.certified and res.tube.min_radius == res.c


def test_illus5_quadratic(illus5):
    _, free, line = illus5
    piece = line.pieces[0]
    res = build_tube(piece, piece.interval, free, _cfg(Quadratic(1.5, 0.5)))
    assert res.c == pytest.approx(0.3980, abs=BAND)
    assert res.tube.min_radius == res.c
    assert res.tube.max_radius == pytest.approx(1.5 * 0.25 + res.c)


def test_illus5_piecewise(illus5):
    _, free, line = illus5
    knots = [1 / 3, 2 / 3]
    profiles = [Linear(0.5, direction="decreasing"), Constant(), Linear(0.5)]
    out = subdivide_and_tube(line, knots, free, _cfg(Constant()), profiles=profiles)
    cs = [r.c for r in out]
    assert cs[0] == pytest.approx(0.3122, abs=BAND)
    assert cs[1] == pytest.approx(0.3980, abs=BAND)
    assert cs[2] == pytest.approx(0.3122, abs=BAND)
    assert all(r.tube.certified for r in out)


def test_no_subdivision_is_single_tube(illus5):
    _, free, line = illus5
    out = subdivide_and_tube(line, [], free, _cfg(Constant()))
    assert len(out) == 1
    direct = build_tube(line.pieces[0], (0, 1), free, _cfg(Constant()))
    assert out[0].c == direct.c


def test_through_obstacle_fails():
    sc = load_scenario("illus3")
    line = PiecewiseLinearTrajectory.uniform([[-1, -1], [1, 1]], 0, 1)
    with pytest.raises(TubeFail):
        build_tube(line.pieces[0], (0, 1), sc.free_space(), _cfg(Constant()))
    out = subdivide_and_tube(line, [], sc.free_space(), _cfg(Constant()))
    assert isinstance(out[0], TubeFail)


def test_zero_size_matches_segment(illus5):
    _, free, line = illus5
    mid = line.split([1 / 3, 2 / 3]).pieces[1]
    assert verify_tube_size(mid, mid.interval, free, Constant(), 0.0)
    assert verify_segment(mid, mid.interval, free).verified


def test_narrow_corridor_and_clearance(illus5):
    _, free, line = illus5
    mid = line.split([1 / 3, 2 / 3]).pieces[1]
    ts = np.linspace(*mid.interval, 11)
    clear = min(clearance(free.member, mid(t), 0.8, n_dir=360, n_r=1601) for t in ts)
    assert clear < 0.5  # corridor narrower than 2 * c_max
    assert not verify_tube_size(mid, mid.interval, free, Constant(), 0.5)
    res = build_tube(mid, mid.interval, free, _cfg(Constant()))
    assert clear >= res.c - 1e-4


def test_tube_soundness_sampled(illus5):
    sc, free, line = illus5
    mid = line.split([1 / 3, 2 / 3]).pieces[1]
    res = build_tube(mid, mid.interval, free, _cfg(Constant()))
    t = res.tube
    assert dense_tube_min(free.constraints(), t.center, t.radius_poly(), t.interval, 200, 500) >= -1e-6
    rep = mc_tube_risk(t, sc.obstacles, sc.dists, 10_000, 50, 100, seed=3)
    for r in rep.values():
        assert binomial_bound(r["max_risk"], r["n"], 0.1)


def test_degree_strengthening_does_not_shrink(illus5):
    _, free, line = illus5
    mid = line.split([1 / 3, 2 / 3]).pieces[1]
    cfg = TubeSearchConfig(c_max=0.5, eps=1e-2)
    base = build_tube(mid, mid.interval, free, cfg)
    richer = build_tube(mid, mid.interval, free, cfg, SolverConfig(extra_degree=2))
    assert richer.c >= base.c


def test_bisection_bracket_synthetic():
    for true_c in [0.0, 0.123, 0.37, 0.4999, 0.5]:
        res = bisect_max(lambda c: (c <= true_c, c), 0.0, 0.5, 1e-3)
        assert res.hi - res.lo <= 1e-3
        assert res.lo <= true_c and (res.hi > true_c or res.hi == 0.5)
        assert res.payload == res.lo
    assert bisect_max(lambda c: (False, None), 0.0, 1.0, 1e-3) is None


def test_profiles_and_nesting():
    for prof in [Constant(0.2), Linear(0.5, 0.2), Linear(0.5, 0.2, "decreasing"),
                 Quadratic(1.5, 0.5, 0.2)]:
        s = np.linspace(0, 1, 101)
        r = prof.poly().eval({T: s})
        assert np.all(np.broadcast_to(r, s.shape) >= 0)
        assert np.broadcast_to(r, s.shape).min() == pytest.approx(prof.extremes()[0])
        bigger = prof.with_c(0.3).poly().eval({T: s})
        assert np.all(bigger >= r)
        assert profile_from_json(prof.to_json()) == prof
    with pytest.raises(ValueError):
        Quadratic(0.0, 0.5)
    with pytest.raises(ValueError):
        Quadratic(1.0, 1.5)
    with pytest.raises(ValueError):
        Linear(0.5, direction="sideways")
    assert make_profile("linear") == Linear(0.5)
    assert make_profile("quadratic") == Quadratic(1.5, 0.5)


def test_config_validation():
    with pytest.raises(ValueError):
        TubeSearchConfig(c_max=0.5, r_min=0.6)
    with pytest.raises(ValueError):
        TubeSearchConfig(c_max=0.5, eps=0.0)


def test_objective():
    line = PiecewiseLinearTrajectory.uniform([[0, 0], [1, 0]], 0, 1)
    tube = Tube(line.pieces[0].polys, Constant(0.5), (0, 1))
    assert tube_objective(line, tube, 1.0) == pytest.approx(5.0)
    assert tube_objective(line, tube, 0.0) == pytest.approx(1.0)
    quad = Tube(line.pieces[0].polys, Quadratic(1.5, 0.5, 0.398), (0, 1))
    assert quad.min_radius == 0.398
    assert tube_objective(line, quad, 2.0) - 1.0 == pytest.approx(2.0 / 0.398 ** 2)


def test_tube_json(illus5):
    _, free, line = illus5
    res = build_tube(line.pieces[0], (0, 1), free, _cfg(Constant(), c_max=0.2))
    d = json.loads(json.dumps(res.tube.to_json()))
    assert {"profile", "interval", "center_trajectory_ref", "certified", "min_radius",
            "max_radius"} <= d.keys()
    back = Tube.from_json(d)
    assert back.profile == res.tube.profile
    np.testing.assert_allclose(back.center_at([0.2, 0.7]), res.tube.center_at([0.2, 0.7]))


def test_method_two_empty_environment():
    free = FreeSpace([], [-1, -1], [1, 1])
    req = PlanRequest(free, [-0.5, 0], [0.5, 0])
    tp = plan_with_tube(req, TubeSearchConfig(c_max=0.8, r_min=0.1))
    assert len(tp.trajectory) == 1
    assert tp.tubes[0].c == pytest.approx(0.5, abs=2e-3)
    assert tp.min_radius >= 0.1


def test_method_two_needs_positive_r_min():
    req = PlanRequest(FreeSpace([], [-1, -1], [1, 1]), [-0.5, 0], [0.5, 0])
    with pytest.raises(ValueError):
        plan_with_tube(req, TubeSearchConfig(c_max=0.5, r_min=0.0))


def test_method_two_on_illus5(illus5):
    sc, _, _ = illus5
    req = sc.plan_request(seed=0)
    tp = plan_with_tube(req, sc.tube_config(r_min=0.2))
    assert tp.min_radius >= 0.2 and all(r.tube.certified for r in tp.tubes)


@pytest.mark.slow
def test_delivery_split_last_piece():
    sc = load_scenario("delivery_robot")
    free = sc.free_space()
    traj = rrt_sos_dynamic(sc.plan_request(), sc.pieces).trajectory
    last = PiecewiseLinearTrajectory(traj.waypoints[-2:], traj.knots[-2:])
    cfg = sc.tube_config()
    whole = build_tube(last.pieces[0], last.horizon, free, cfg)
    a, b = last.horizon
    parts = subdivide_and_tube(last, [a + (b - a) / 3, a + 2 * (b - a) / 3], free, cfg)
    cs = [r.c for r in parts]
    assert len(cs) == 3
    # a tube certified on the whole piece restricts to each part
    assert min(cs) >= whole.c - cfg.eps
    assert max(cs) > whole.c
