import math

import numpy as np
import pytest

from geopressure.errors import BoundaryHit
from geopressure.orbit_engine import periodic_points, preimage_tree
from geopressure.symbolic import (
    count_admissible_words,
    exceptional_scan,
    itinerary,
    partition_pieces,
    spectral_entropy,
    transition_matrix,
    transitivity_flags,
)


def test_itineraries_of_fixed_endpoints(cheb3):
    f, _ = cheb3
    assert itinerary(f, 1.0, 5).symbols == (2,) * 5
    assert itinerary(f, -1.0, 5).symbols == (0,) * 5


def _angle_symbol(theta):
    # cos(theta) > 1/2 iff theta < pi/3 after folding into [0, pi]
    th = math.fmod(theta, 2 * math.pi)
    th = 2 * math.pi - th if th > math.pi else th
    return 2 if th < math.pi / 3 else (1 if th < 2 * math.pi / 3 else 0)


def test_itinerary_matches_tripling_on_angles(cheb3):
    f, _ = cheb3
    theta = 2 * math.pi / 13
    expected = tuple(_angle_symbol(theta * 3**k) for k in range(3))
    assert itinerary(f, math.cos(theta), 3).symbols == expected


def test_itinerary_hitting_a_cut_is_flagged(cheb3):
    f, _ = cheb3
    it = itinerary(f, 0.5, 3)
    assert it.truncated and it.symbols == ()
    with pytest.raises(BoundaryHit):
        itinerary(f, 0.5, 3, strict=True)


@pytest.mark.parametrize("name,size", [("cheb3", 3), ("logistic4", 2)])
def test_full_branch_matrices_are_all_ones(name, size, request):
    f, K = request.getfixturevalue(name)
    A = transition_matrix(f, K)
    assert A.entries.shape == (size, size)
    assert (A.entries == 1).all()


def test_notwi_matrix_and_entropy(notwi):
    f, K = notwi
    A = transition_matrix(f, K)
    assert A.entries.tolist() == [[1, 1, 1], [1, 0, 1], [1, 1, 1]]
    assert spectral_entropy(A) == pytest.approx(math.log(1 + math.sqrt(3)), abs=1e-12)
    assert transitivity_flags(A) == {"irreducible": True, "primitive": True}


def test_spectral_entropy_examples():
    assert spectral_entropy(np.ones((3, 3))) == pytest.approx(math.log(3), abs=1e-12)
    assert spectral_entropy(np.array([[1, 1], [1, 0]])) == pytest.approx(math.log((1 + math.sqrt(5)) / 2), abs=1e-12)


def test_transitivity_examples():
    assert transitivity_flags(np.eye(2)) == {"irreducible": False, "primitive": False}
    assert transitivity_flags(np.array([[0, 1], [1, 0]])) == {"irreducible": True, "primitive": False}


def test_entropy_agrees_with_periodic_growth(notwi):
    f, K = notwi
    n = 10
    count = sum(o.period for o in periodic_points(f, K, n) if n % o.period == 0)
    assert abs(math.log(count) / n - spectral_entropy(transition_matrix(f, K))) <= 0.05


def test_word_counts_equal_tree_counts(notwi):
    f, K = notwi
    A = transition_matrix(f, K)
    z = next(x for o in periodic_points(f, K, 3) if o.period == 3 for x in o.points if -0.99 < x < -0.5)
    for n in range(1, 7):
        assert preimage_tree(f, K, z, n).points[n].size == count_admissible_words(A, n + 1, end_symbol=0)


def test_logistic_critical_value_is_weakly_exceptional(logistic4):
    f, K = logistic4
    report = exceptional_scan(f, K, seeds=(1.0,))
    (cand,) = report.candidates
    assert cand.verdict == "weakly_exceptional"
    assert cand.closure == pytest.approx((1.0,))


def test_cheb3_maximal_exceptional_set(cheb3):
    f, K = cheb3
    report = exceptional_scan(f, K, seeds=(1.0, -1.0))
    assert [c.verdict for c in report.candidates] == ["weakly_exceptional"] * 2
    assert report.e_max == pytest.approx((-1.0, 1.0))


def test_generic_point_is_not_exceptional(cheb3):
    f, K = cheb3
    report = exceptional_scan(f, K, seeds=(0.3,), depth=5)
    assert report.candidates[0].verdict == "not_exceptional"


def test_exceptional_verdict_persists_with_depth(logistic4):
    f, K = logistic4
    for d in range(3, 8):
        a = exceptional_scan(f, K, seeds=(1.0, 0.3), depth=d)
        b = exceptional_scan(f, K, seeds=(1.0, 0.3), depth=d + 1)
        for ca, cb in zip(a.candidates, b.candidates):
            if ca.verdict == "weakly_exceptional":
                assert cb.verdict == "weakly_exceptional"


def test_partition_pieces_cover_domain(cheb3):
    f, _ = cheb3
    pieces = partition_pieces(f)
    assert pieces[0].lo == -1.0 and pieces[-1].hi == 1.0
    assert all(a.hi == b.lo for a, b in zip(pieces, pieces[1:]))
