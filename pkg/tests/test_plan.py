import numpy as np
import pytest

from oracles import binomial_bound, dense_segment_min
from riskplan.cert import Certificate, Status
from riskplan.contour import FreeSpace
from riskplan.oracle import mc_trajectory_risk
from riskplan.plan import (
    NoPathFound, PlannerConfig, PlanRequest, SearchTree, certificate_check, mc_rrt_baseline,
    recertify, rrt_sos_dynamic, rrt_sos_static, segment_polys, shortcut,
)
from riskplan.poly import T
from riskplan.scenario import load_scenario
from riskplan.trajectory import trajectory_length


@pytest.fixture(scope="module")
def illus3():
    return load_scenario("illus3")


@pytest.fixture(scope="module")
def illus3_plan(illus3):
    return rrt_sos_static(illus3.plan_request(seed=0))


def _empty(lo=(-1, -1), hi=(1, 1)):
    return FreeSpace([], lo, hi)


def test_empty_environment_straight_line():
    req = PlanRequest(_empty(), [-1, -1], [1, 1])
    res = rrt_sos_static(req)
    assert len(res.trajectory) == 1 and res.iterations == 0
    assert res.trajectory.certified


def test_goal_inside_obstacle(illus3):
    req = illus3.plan_request()
    req.goal = np.array([0.0, 0.0])
    with pytest.raises(NoPathFound):
        rrt_sos_static(req)


def test_iteration_cap(illus3):
    with pytest.raises(NoPathFound):
        rrt_sos_static(illus3.plan_request(max_iterations=3))


def test_illus3_certified(illus3, illus3_plan):
    traj = illus3_plan.trajectory
    free = illus3.free_space()
    assert traj.certified and len(traj) >= 2
    assert np.abs(traj(0.0) - illus3.start).max() <= 1e-9
    assert np.abs(traj(1.0) - illus3.goal).max() <= 1e-9
    for piece in traj.pieces:
        assert dense_segment_min(free.constraints(), piece.polys, piece.interval, 1000) >= -1e-6
    rep = mc_trajectory_risk(traj, illus3.obstacles, illus3.dists, 10_000, 200, seed=1)
    for r in rep.values():
        assert binomial_bound(r["max_risk"], r["n"], 0.1)
        assert r["note"] == "discretized validation, not a certificate"


def test_certificates_reverify(illus3, illus3_plan):
    certs = recertify(illus3_plan.trajectory, illus3.free_space())
    assert all(c.verified for c in certs)


def test_tree_edges_all_certified(illus3_plan):
    tree = illus3_plan.tree
    assert all(c is not None and c.verified for _, _, c in tree.edges())
    header = tree.to_csv().splitlines()[0]
    assert header == "parent,child,level,from_x1,from_x2,to_x1,to_x2,status,margin"


def test_deterministic(illus3, illus3_plan):
    again = rrt_sos_static(illus3.plan_request(seed=0))
    np.testing.assert_array_equal(again.trajectory.waypoints, illus3_plan.trajectory.waypoints)
    np.testing.assert_array_equal(again.tree.points(), illus3_plan.tree.points())


def test_shortcut_dominates(illus3, illus3_plan):
    free = illus3.free_space()
    short = shortcut(illus3_plan.tree, free)
    assert short.certified
    assert trajectory_length(short) <= trajectory_length(illus3_plan.trajectory) + 1e-12
    np.testing.assert_allclose(short(1.0), illus3.goal)


def _always(status=Status.VERIFIED):
    def check(p, q, t1, t2):
        return Certificate(status, [], (t1, t2), 0.0)
    return check


def test_shortcut_collinear_detour():
    tree = SearchTree()
    tree.add([0, 0], -1)
    tree.add([0.5, 0.5], 0, cert=_always()(0, 0, 0, 1))
    tree.add([1, 1], 1, cert=_always()(0, 0, 0, 1))
    traj = shortcut(tree, _empty(), check=_always())
    np.testing.assert_allclose(traj.waypoints, [[0, 0], [1, 1]])


def test_shortcut_keeps_direct_edge():
    tree = SearchTree()
    tree.add([-1, -1], -1)
    tree.add([1, 1], 0, cert=_always()(0, 0, 0, 1))
    traj = shortcut(tree, _empty())
    assert len(traj) == 1 and traj.certified


def test_static_edges_are_time_shift_invariant(illus3):
    free = illus3.free_space()
    check = certificate_check(free, illus3.solver_config())
    rng = np.random.default_rng(9)
    for _ in range(10):
        p, q = rng.uniform(-1, 1, (2, 2))
        a = check(p, q, 0.0, 1.0)
        b = check(p, q, 0.5, 1.0)
        assert a.status is b.status


def test_static_obstacles_through_dynamic_planner(illus3):
    res = rrt_sos_dynamic(illus3.plan_request(seed=1), 3)
    traj = res.trajectory
    assert len(traj) == 3 and traj.certified
    np.testing.assert_allclose(traj.knots, [0, 1 / 3, 2 / 3, 1])
    free = illus3.free_space()
    for piece in traj.pieces:
        assert dense_segment_min(free.constraints(), piece.polys, piece.interval, 1000) >= -1e-6


def test_dynamic_illus4():
    sc = load_scenario("illus4")
    res = rrt_sos_dynamic(sc.plan_request(), 2)
    traj = res.trajectory
    assert len(traj) == 2 and traj.certified
    assert [res.tree.levels[i] for i in res.tree.path_to(len(res.tree) - 1)] == [0, 1, 2]
    free = sc.free_space()
    for piece in traj.pieces:
        assert dense_segment_min(free.constraints(), piece.polys, piece.interval, 1000) >= -1e-6


def test_dynamic_requires_pieces(illus3):
    with pytest.raises(ValueError):
        rrt_sos_dynamic(illus3.plan_request(), 0)


def test_static_planner_rejects_dynamic_space():
    with pytest.raises(ValueError):
        rrt_sos_static(load_scenario("illus4").plan_request())


def test_baseline_empty_environment():
    req = PlanRequest(_empty(), [-1, -1], [1, 1])
    res = mc_rrt_baseline(req, {}, 0.1)
    assert len(res.trajectory) == 1
    assert res.stats == {"n_samples": 10, "n_waypoints": 20}
    assert res.trajectory.certificates == [None]


def test_baseline_on_illus3(illus3):
    res = mc_rrt_baseline(illus3.plan_request(seed=0), illus3.dists, 0.1)
    assert res.edge_checks > 0 and res.mean_edge_check_time > 0
    np.testing.assert_allclose(res.trajectory(1.0), illus3.goal)


def test_default_step_and_validation():
    req = PlanRequest(_empty((0, 0), (3, 4)), [0, 0], [3, 4])
    assert req.step == pytest.approx(0.25)
    assert PlanRequest(_empty(), [0, 0], [1, 1], config=PlannerConfig(step_size=0.1)).step == 0.1
    with pytest.raises(ValueError):
        PlanRequest(_empty(), [0, 0, 0], [1, 1])
    with pytest.raises(ValueError):
        PlanRequest(_empty(), [0, 0], [1, 1], horizon=(1, 1))


def test_segment_polys_hits_endpoints():
    polys = segment_polys([1, 2], [3, -1], 0.5, 1.5)
    assert [p.eval({T: 0.5}) for p in polys] == pytest.approx([1, 2])
    assert [p.eval({T: 1.5}) for p in polys] == pytest.approx([3, -1])
