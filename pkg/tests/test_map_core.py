import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geopressure.errors import OutOfDomain
from geopressure.map_core import (
    Interval,
    Membership,
    MultimodalMap,
    Repeller,
    branch_preimages,
    derivative,
    evaluate,
    membership,
    singular_set,
)
from geopressure.orbit_engine import periodic_points
from geopressure.symbolic import itinerary


def test_interval_rejects_reversed_endpoints():
    with pytest.raises(ValueError):
        Interval(1.0, 0.0)
    assert Interval(0.5, 0.5).length == 0.0


@pytest.mark.parametrize(
    "name,x,expected",
    [("cheb3", 1.0, 1.0), ("cheb3", -0.5, 1.0), ("logistic4", 0.5, 1.0)],
)
def test_evaluate_examples(name, x, expected, request):
    f, _ = request.getfixturevalue(name)
    assert evaluate(f, x) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize(
    "name,x,expected",
    [("cheb3", 1.0, 9.0), ("cheb3", 0.5, 0.0), ("logistic4", 0.0, 4.0)],
)
def test_first_derivative_examples(name, x, expected, request):
    f, _ = request.getfixturevalue(name)
    assert derivative(f, x, 1) == pytest.approx(expected, abs=1e-15)


def test_second_derivative_is_analytic(cheb3):
    f, _ = cheb3
    assert derivative(f, 0.7, 2) == pytest.approx(24 * 0.7, abs=1e-14)


def test_evaluate_outside_neighbourhood_raises(cheb3):
    f, _ = cheb3
    with pytest.raises(OutOfDomain):
        evaluate(f, 5.0)


def test_preimages_of_critical_value_flag_the_tangency(cheb3):
    f, _ = cheb3
    pre = branch_preimages(f, 1.0)
    xs = sorted(p.x for p in pre)
    assert xs == pytest.approx([-0.5, 1.0], abs=1e-12)
    tangent = {round(p.x, 9): p.tangent for p in pre}
    assert tangent[-0.5] and not tangent[1.0]


def test_preimages_of_zero(cheb3):
    f, _ = cheb3
    xs = sorted(p.x for p in branch_preimages(f, 0.0))
    r = math.sqrt(3) / 2
    assert xs == pytest.approx([-r, 0.0, r], abs=1e-13)


def test_logistic_preimages_of_three_quarters(logistic4):
    f, _ = logistic4
    xs = sorted(p.x for p in branch_preimages(f, 0.75))
    assert xs == pytest.approx([0.25, 0.75], abs=1e-13)


def test_critical_points_and_laps(cheb3):
    f, _ = cheb3
    assert f.critical_locations == pytest.approx([-0.5, 0.5])
    assert [c.kind for c in f.critical_points] == ["turning", "turning"]
    orient = [br.orientation for br in f.laps]
    assert orient == [1, -1, 1]
    for br in f.laps:
        mid = br.interval.mid
        assert np.sign(f.d1(mid)) == br.orientation


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=-0.999, max_value=0.999))
def test_preimages_evaluate_back(y):
    from geopressure.registry import load_map

    f, _ = load_map("cheb3")
    pre = f.preimages(y)
    assert len(pre) == 3
    for p in pre:
        assert abs(float(f(p.x)) - y) <= 10 * np.finfo(float).eps * f.scale


def test_regular_values_have_full_degree(cheb3, logistic4):
    rng = np.random.default_rng(3)
    for (f, _), lo, hi, deg in ((cheb3, -1, 1, 3), (logistic4, 0, 1, 2)):
        ys = rng.uniform(lo, hi, 1000)
        ys = ys[np.abs(np.abs(ys) - 1) > 1e-9] if deg == 3 else ys[(ys > 1e-9) & (ys < 1 - 1e-9)]
        counts = {len(f.preimages(float(y))) for y in ys}
        assert counts == {deg}


def test_singular_set_examples(cheb3, notwi):
    f, K = cheb3
    s = singular_set(f, K)
    assert s.crit == pytest.approx((-0.5, 0.5))
    assert s.no_points == ()
    g, N = notwi
    hole = N.holes[0]
    sn = singular_set(g, N)
    assert any(abs(x - hole.lo) < 1e-12 for x in sn.no_points)
    assert any(abs(x - hole.hi) < 1e-12 for x in sn.no_points)


def test_singular_set_without_critical_points():
    f = MultimodalMap("affine", (0.0, 3.0), (Interval(0.0, 1.0),))
    K = Repeller(f, holes=(Interval(1 / 3, 2 / 3),))
    s = singular_set(f, K)
    assert s.crit == ()
    assert s.all == s.no_points


def test_singular_points_are_not_periodic(notwi):
    f, K = notwi
    s = singular_set(f, K)
    pts = []
    for n in range(1, 13):
        pts += [x for o in periodic_points(f, K, n) for x in o.points]
    pts = np.asarray(pts)
    for x in s.all:
        assert np.min(np.abs(pts - x)) > 1e-9


def test_membership_examples(cheb3, notwi):
    f, K = cheb3
    assert membership(K, 0.3) is Membership.IN_K
    g, N = notwi
    rng = np.random.default_rng(0)
    starts_11 = [x for x in rng.uniform(-1, 1, 4000) if itinerary(g, x, 2).symbols == (1, 1)]
    assert starts_11
    assert all(membership(N, x) is Membership.NOT_IN_K for x in starts_11)


def test_periodic_point_with_allowed_itinerary_is_in_notwi(notwi):
    f, K = notwi
    orbits = [o for o in periodic_points(f, K, 3) if o.period == 3]
    found = False
    for o in orbits:
        for x in o.points:
            if itinerary(f, x, 3).symbols == (1, 2, 0):
                found = True
                assert membership(K, x) is Membership.IN_K
    assert found
