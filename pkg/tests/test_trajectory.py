import json

import numpy as np
import pytest
from scipy import integrate

from riskplan.trajectory import (
    PiecewiseLinearTrajectory, PolynomialTrajectory, load_trajectory, trajectory_length,
)


def test_unit_segment_length():
    tr = PiecewiseLinearTrajectory.uniform([[0, 0], [1, 0]], 0, 1)
    assert trajectory_length(tr) == pytest.approx(1.0)


def test_stationary_length():
    tr = PolynomialTrajectory(np.array([[0.3, -0.2]]), 0, 1)
    assert trajectory_length(tr) == 0.0


def test_polynomial_length_matches_quadrature():
    tr = PolynomialTrajectory(np.array([[0, 0], [1, -1], [0.5, 2]]), 0, 1)
    speed2 = lambda t: np.sum((np.array([1, -1]) + 2 * t * np.array([0.5, 2])) ** 2)
    ref, _ = integrate.quad(speed2, 0, 1, epsabs=1e-13)
    ts = np.linspace(0, 1, 10_001)
    trap = integrate.trapezoid([speed2(t) for t in ts], ts)
    assert trajectory_length(tr) == pytest.approx(ref, abs=1e-6)
    assert trajectory_length(tr) == pytest.approx(trap, abs=1e-6)
    # by hand: int_0^1 (1 + t)^2 + (4t - 1)^2 dt = 7/3 + 7/3
    assert trajectory_length(tr) == pytest.approx(14 / 3, abs=1e-12)


def test_piecewise_length_and_continuity():
    wp = np.array([[0, 0], [1, 0], [1, 2], [3, 2]], float)
    tr = PiecewiseLinearTrajectory.uniform(wp, 0, 3)
    assert trajectory_length(tr) == pytest.approx(1 + 4 + 4)
    for left, right in zip(tr.pieces[:-1], tr.pieces[1:]):
        np.testing.assert_allclose(left(left.t1), right(right.t0), atol=1e-12)
    np.testing.assert_allclose(tr.knots, [0, 1, 2, 3])


def test_arclength_timing_minimizes_energy():
    wp = np.array([[0, 0], [1, 0], [1, 3]], float)
    a = PiecewiseLinearTrajectory.uniform(wp, 0, 1)
    b = PiecewiseLinearTrajectory.by_arclength(wp, 0, 1)
    assert trajectory_length(b) == pytest.approx(16.0)
    assert trajectory_length(b) <= trajectory_length(a)
    assert b(0.0) == pytest.approx(wp[0]) and b(1.0) == pytest.approx(wp[-1])


def test_endpoints_exact():
    wp = np.array([[-1, -1], [0.3, -0.7], [1, 1]], float)
    tr = PiecewiseLinearTrajectory.by_arclength(wp, 0, 1)
    assert np.abs(tr(0.0) - wp[0]).max() <= 1e-9
    assert np.abs(tr(1.0) - wp[-1]).max() <= 1e-9
    poly = PolynomialTrajectory(np.array([[1, 2], [0.5, -1], [0.25, 0.0]]), 0, 2)
    np.testing.assert_allclose(poly(2.0), [1 + 1 + 1, 2 - 2], atol=1e-9)


def test_json_round_trip():
    tr = PiecewiseLinearTrajectory.by_arclength([[0, 0], [1, 1], [2, 0]], 0, 1)
    data = json.loads(json.dumps(tr.to_json()))
    assert data["pieces"][0].keys() == {"a", "b", "t0", "t1"}
    back = load_trajectory(data)
    np.testing.assert_allclose(back.waypoints, tr.waypoints)
    np.testing.assert_allclose(back.knots, tr.knots)
    only_pieces = {"pieces": data["pieces"]}
    np.testing.assert_allclose(load_trajectory(only_pieces).waypoints, tr.waypoints, atol=1e-12)
    poly = PolynomialTrajectory(np.array([[0, 0], [1, 2]]), 0, 1)
    np.testing.assert_allclose(load_trajectory(poly.to_json()).coeffs, poly.coeffs)


def test_split_keeps_path():
    tr = PiecewiseLinearTrajectory.uniform([[0, 0], [2, 0], [2, 2]], 0, 1)
    sp = tr.split([0.25, 0.75])
    assert len(sp) == 4
    ts = np.linspace(0, 1, 101)
    np.testing.assert_allclose(sp(ts), tr(ts), atol=1e-12)


def test_invalid_knots():
    with pytest.raises(ValueError):
        PiecewiseLinearTrajectory([[0, 0], [1, 1]], [0, 0])
    with pytest.raises(ValueError):
        PiecewiseLinearTrajectory([[0, 0]], [0])
