import itertools
import math

import numpy as np
import pytest

from geopressure.errors import OrbitHitsCritical
from geopressure.map_core import Interval
from geopressure.orbit_engine import (
    periodic_points,
    preimage_tree,
    pull_back_components,
    rule_II_check,
    weak_isolation_check,
)
from geopressure.symbolic import count_admissible_words, transition_matrix


def brute_preimages(f, K, z, n):
    """Level-by-level preimages via the scalar branch solver."""
    level = [z]
    for _ in range(n):
        level = [p.x for y in level for p in f.preimages(y, K.branches)]
    return sorted(level)


@pytest.mark.parametrize("name,z,n,count", [("cheb3", 0.3, 4, 81), ("logistic4", 0.3, 5, 32)])
def test_tree_counts_match_brute_force(name, z, n, count, request):
    f, K = request.getfixturevalue(name)
    tree = preimage_tree(f, K, z, n)
    assert tree.points[n].size == count
    assert np.allclose(np.sort(tree.points[n]), brute_preimages(f, K, z, n), atol=1e-12)


def test_tree_nodes_map_to_their_parents(cheb3):
    f, K = cheb3
    tree = preimage_tree(f, K, 0.3, 5)
    for k in range(1, 6):
        parents = tree.points[k - 1][tree.parent[k]]
        assert np.max(np.abs(f(tree.points[k]) - parents)) < 1e-12
        expected = tree.log_deriv[k - 1][tree.parent[k]] + np.log(np.abs(f.d1(tree.points[k])))
        assert np.allclose(tree.log_deriv[k], expected, atol=1e-12)


def test_notwi_tree_count_matches_admissible_words(notwi):
    f, K = notwi
    # a period-3 point inside symbol 2; the fixed point 1 is a critical value
    # and its two tangent preimages collapse into one node
    z = next(x for o in periodic_points(f, K, 3) if o.period == 3 for x in o.points if 0.5 < x < 0.99)
    A = transition_matrix(f, K)
    for n in range(1, 7):
        tree = preimage_tree(f, K, z, n)
        assert tree.points[n].size == count_admissible_words(A, n + 1, end_symbol=2)


def test_tangent_preimages_are_counted_once(notwi):
    f, K = notwi
    tree = preimage_tree(f, K, 1.0, 1)
    assert sorted(tree.points[1]) == pytest.approx([-0.5, 1.0])
    assert tree.zero_derivative_mask(1).sum() == 1


def test_pull_back_of_identity_order(cheb3):
    f, K = cheb3
    T = Interval(0.25, 0.35)
    comps = pull_back_components(f, K, T, 0)
    assert len(comps) == 1 and comps[0].interval == T


def test_pull_back_diameters_shrink_like_three_to_the_minus_n(cheb3):
    f, K = cheb3
    T = Interval(0.25, 0.35)
    comps = pull_back_components(f, K, T, 6)
    diam = max(pb.interval.length for pb in comps if pb.meets_K)
    assert diam <= 0.05 * 3.0**-6 * 4


def test_pull_back_through_critical_value_is_not_diffeomorphic(cheb3):
    f, K = cheb3
    T = Interval(0.98, 1.0)
    comps = pull_back_components(f, K, T, 1)
    around = [pb for pb in comps if pb.interval.lo < -0.5 < pb.interval.hi]
    assert len(around) == 1
    assert not around[0].is_diffeo and around[0].contains_singular


def test_pull_back_images_sit_inside_target(logistic4):
    f, K = logistic4
    T = Interval(0.3, 0.36)
    for pb in pull_back_components(f, K, T, 4):
        xs = np.linspace(pb.interval.lo, pb.interval.hi, 33)
        ys = xs
        for _ in range(4):
            ys = f(ys)
        assert ys.min() >= T.lo - 1e-9 and ys.max() <= T.hi + 1e-9


def test_nested_pull_back_diameters_do_not_grow(cheb3):
    f, K = cheb3
    T = Interval(0.25, 0.35)
    prev = T.length
    for n in range(1, 7):
        d = max(pb.interval.length for pb in pull_back_components(f, K, T, n) if pb.meets_K)
        assert d <= prev + 1e-15
        prev = d


def test_cheb3_fixed_points_and_multipliers(cheb3):
    f, K = cheb3
    orbits = sorted(periodic_points(f, K, 1), key=lambda o: o.points[0])
    assert [o.points[0] for o in orbits] == pytest.approx([-1.0, 0.0, 1.0], abs=1e-12)
    assert [o.multiplier for o in orbits] == pytest.approx([9.0, -3.0, 9.0], abs=1e-9)


def _fix_count(orbits, n):
    return sum(o.period for o in orbits if n % o.period == 0)


def test_periodic_point_counts(cheb3, logistic4):
    assert _fix_count(periodic_points(*cheb3, 2), 2) == 9
    assert _fix_count(periodic_points(*logistic4, 3), 3) == 8


def test_cheb3_period_two_points_match_angle_oracle(cheb3):
    # cos(theta) is fixed by f^2 iff 9*theta = +-theta mod 2*pi
    f, K = cheb3
    expected = sorted({round(math.cos(2 * math.pi * k / d), 12) for d in (8, 10) for k in range(d)})
    got = sorted(round(x, 12) for o in periodic_points(f, K, 2) for x in o.points)
    assert got == pytest.approx(expected, abs=1e-10)


def test_periodic_orbits_close_and_are_consistent(cheb3):
    f, K = cheb3
    for o in periodic_points(f, K, 6):
        assert o.residual(f) <= 1e-10
        assert o.chi == pytest.approx(math.log(abs(o.multiplier)) / o.period, abs=1e-12)
        assert o.points[0] == min(o.points)


def test_rule_ii_bounded_for_cheb3(cheb3):
    f, K = cheb3
    value, run = rule_II_check(f, K, 0.3, 2000, running=True)
    assert value <= 5.0
    later = run[500:]
    assert later.max() <= 1.2 * later.min()


def test_rule_ii_at_fixed_point_is_constant(cheb3):
    f, K = cheb3
    x = 1.0
    expected = max(-math.log(abs(x - c)) for c in f.critical_locations)
    n = 50
    assert rule_II_check(f, K, x, n) == pytest.approx(expected * (n - 1) / n, rel=1e-12)


def test_rule_ii_on_notwi_is_bounded(notwi):
    f, K = notwi
    x = K.k_sample(6)[37]
    assert rule_II_check(f, K, float(x), 1000) <= 5.0


def test_rule_ii_detects_critical_hit(cheb3):
    f, K = cheb3
    with pytest.raises(OrbitHitsCritical):
        rule_II_check(f, K, float(f.preimages(0.5)[0].x), 3)


def test_weak_isolation_examples(cheb3, logistic4, notwi):
    assert weak_isolation_check(*cheb3, 6).holds
    assert weak_isolation_check(*logistic4, 8).holds
    report = weak_isolation_check(*notwi, 6)
    assert not report.holds
    words = {v["itinerary"] for v in report.violations}
    for n in range(4, 7):
        assert "11" + "0" * (n - 2) in words
