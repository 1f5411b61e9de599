"""Randomized invariants; each property runs 1000 examples."""

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from oracles import quad_moment
from riskplan.contour import Obstacle, build_contour
from riskplan.dist import Beta, Gaussian, MomentTable, Uniform, expectation
from riskplan.poly import T, Polynomial, w, x
from riskplan.tube import bisect_max

PROPS = settings(max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
VARS = [x(1), x(2), w(1), T]

monomials = st.lists(
    st.tuples(st.sampled_from(VARS), st.integers(1, 3)), max_size=3,
).map(lambda pairs: tuple(sorted(dict(pairs).items())))

# small integer coefficients keep ring arithmetic exact in floating point
polys = st.dictionaries(monomials, st.integers(-5, 5), max_size=5).map(Polynomial)
points = st.fixed_dictionaries(
    {v: st.floats(-1.5, 1.5, allow_nan=False) for v in VARS})

uniforms = st.tuples(st.floats(-2, 2), st.floats(0.01, 2)).map(lambda p: Uniform(p[0], p[0] + p[1]))
gaussians = st.tuples(st.floats(-2, 2), st.floats(1e-3, 1.0)).map(lambda p: Gaussian(*p))
betas = st.tuples(st.floats(0.5, 6), st.floats(0.5, 6)).map(lambda p: Beta(*p))
dists = st.one_of(uniforms, gaussians, betas)


def _close(a, b):
    return a.allclose(b, atol=1e-9)


@PROPS
@given(polys, polys, polys)
def test_ring_axioms(p, q, r):
    assert p + q == q + p
    assert p * q == q * p
    assert (p + q) + r == p + (q + r)
    assert (p * q) * r == p * (q * r)
    assert p * (q + r) == p * q + p * r
    assert (p - p).is_zero and p * Polynomial.const(1.0) == p
    assert (p * Polynomial()).is_zero


@PROPS
@given(polys, polys)
def test_degree_of_product(p, q):
    if p.is_zero or q.is_zero:
        assert (p * q).is_zero
    else:
        assert (p * q).degree == p.degree + q.degree


@PROPS
@given(polys, polys, points, st.sampled_from(VARS))
def test_substitute_commutes_with_eval(p, q, pt, v):
    lhs = p.substitute({v: q}).eval(pt)
    rhs = p.eval({**pt, v: q.eval(pt)})
    assert np.isclose(lhs, rhs, rtol=1e-9, atol=1e-9)


@PROPS
@given(dists, st.integers(0, 12))
def test_moments_match_quadrature(d, k):
    exact = d.raw_moment(k)
    ref = quad_moment(d, k)
    assert np.isclose(exact, ref, rtol=1e-8, atol=1e-12)


@PROPS
@given(polys, uniforms, gaussians, points)
def test_cauchy_schwarz(p, d1, d2, pt):
    # p uses w1 only; adding a w2 term exercises independence
    p = p + Polynomial({((w(2), 1), (x(1), 1)): 1.0})
    dd = {w(1): d1, w(2): d2}
    m1 = expectation(p, MomentTable.for_polynomial(dd, p)).eval(pt)
    m2 = expectation(p * p, MomentTable.for_polynomial(dd, p, 2)).eval(pt)
    assert m2 >= m1 ** 2 - 1e-9 * max(1.0, m2)


@PROPS
@given(st.floats(0.05, 0.9), st.floats(0.001, 0.3), st.floats(0, 1), st.floats(0, 1),
       st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=1, max_size=20))
def test_contour_monotone_in_delta(r0, spread, u, v, pts):
    obs = Obstacle("o", Polynomial({((w(1), 2),): 1.0, ((x(1), 2),): -1.0, ((x(2), 2),): -1.0}))
    dd = {w(1): Uniform(r0, r0 + spread)}
    d1, d2 = sorted([u, v])
    pts = np.array(pts)
    m1 = build_contour(obs, d1, dd).member(pts)
    m2 = build_contour(obs, d2, dd).member(pts)
    assert np.all(m2 | ~m1)


@PROPS
@given(st.floats(0.01, 2), st.floats(0, 1), st.floats(1e-4, 0.1))
def test_bisection_bracket(c_max, frac, eps):
    true_c = frac * c_max
    calls = []

    def verify(c):
        calls.append(c)
        return c <= true_c, ("cert", c)

    res = bisect_max(verify, 0.0, c_max, eps)
    assert res.hi - res.lo <= eps
    assert verify(res.lo)[0]
    assert res.payload == ("cert", res.lo)
    assert res.hi == c_max or not verify(res.hi)[0]
    assert res.evaluations <= 2 + max(0, int(np.ceil(np.log2(c_max / eps))))
