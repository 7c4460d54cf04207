"""Backward orbits, pull-backs, periodic orbits and orbit diagnostics.

Everything here is vectorised level by level with numpy.  Trees are stored
as struct-of-arrays (one array per level) rather than node objects because
a depth-12 tree of the cubic map already has half a million leaves.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import CylinderBudgetExceeded, EmptyTree, OrbitHitsCritical
from .map_core import Interval, Membership, MultimodalMap, Repeller, singular_set
from .symbolic import itinerary

log = logging.getLogger(__name__)

DEFAULT_CYLINDER_BUDGET = 3**16
INDIFFERENCE_BAND = 1e-8


# ---------------------------------------------------------------------------
# preimage trees


class PreimageNode(NamedTuple):
    point: float
    depth: int
    log_abs_deriv_along_path: float
    parent: int  # index into the previous level, -1 for the root


@dataclass
class PreimageTree:
    """Levels ``0..n`` of backward orbits of ``z`` inside ``K``.

    ``points[k]``, ``log_deriv[k]`` and ``parent[k]`` are aligned arrays for
    depth ``k``; ``log_deriv`` is ``log|(f^k)'(x)|`` and is ``-inf`` on
    branches through a critical point.
    """

    z: float
    points: list
    log_deriv: list
    parent: list
    laps: list

    @property
    def depth(self):
        return len(self.points) - 1

    def leaves(self):
        return self.points[-1], self.log_deriv[-1]

    def zero_derivative_mask(self, k=None):
        k = self.depth if k is None else k
        return ~np.isfinite(self.log_deriv[k])

    def nodes(self, k=None):
        k = self.depth if k is None else k
        return [
            PreimageNode(float(x), k, float(d), int(p))
            for x, d, p in zip(self.points[k], self.log_deriv[k], self.parent[k])
        ]


def _adjacent_left(branches):
    """For each branch, whether its left endpoint is shared with the previous branch."""
    out = [False]
    for a, b in zip(branches, branches[1:]):
        out.append(a.interval.hi == b.interval.lo)
    return out


def backward_step(fmap: MultimodalMap, branches, ys):
    """All preimages of the array ``ys`` over ``branches``.

    Returns ``(x, parent_index, branch_index)`` sorted by parent then branch,
    which is the depth-first order of the tree.  Roots on a boundary shared by
    two adjacent branches are kept on the left branch only.
    """
    ys = np.asarray(ys, dtype=float)
    xs, par, lap = [], [], []
    shared = _adjacent_left(branches)
    idx = np.arange(ys.size)
    for b, br in enumerate(branches):
        x = fmap.invert(br, ys)
        ok = np.isfinite(x)
        if shared[b]:
            ok &= x != br.interval.lo
        xs.append(x[ok])
        par.append(idx[ok])
        lap.append(np.full(int(ok.sum()), b))
    x = np.concatenate(xs)
    p = np.concatenate(par)
    lp = np.concatenate(lap)
    order = np.lexsort((lp, p))
    return x[order], p[order], lp[order]


def preimage_tree(fmap: MultimodalMap, repeller: Repeller, z, n, *, branches=None):
    """All points of ``f^{-k}(z)`` in ``K`` for ``k <= n`` with path derivatives.

    Pruning is exact: a preimage is generated only on the pieces of
    ``components \\ holes``, so any branch leaving the effective set is
    never created.
    """
    branches = repeller.branches if branches is None else branches
    pts = [np.array([float(z)])]
    logd = [np.array([0.0])]
    parents = [np.array([-1])]
    laps = [np.array([-1])]
    with np.errstate(divide="ignore"):
        for _ in range(n):
            x, p, lp = backward_step(fmap, branches, pts[-1])
            d = logd[-1][p] + np.log(np.abs(fmap.d1(x)))
            pts.append(x)
            logd.append(d)
            parents.append(p)
            laps.append(lp)
    tree = PreimageTree(float(z), pts, logd, parents, laps)
    if n >= 1 and tree.points[-1].size == 0:
        raise EmptyTree(f"{fmap.name}: z={z} has no K-preimages at depth {n}")
    zero = int(tree.zero_derivative_mask().sum())
    if zero:
        log.debug("%s: %d depth-%d branches pass through a critical point", fmap.name, zero, n)
    return tree


# ---------------------------------------------------------------------------
# pull-backs


@dataclass(frozen=True)
class PullBack:
    interval: Interval
    order: int
    meets_K: bool
    is_diffeo: bool
    contains_singular: bool


def _pull_back_level(fmap, branches, lo, hi, diffeo, wit_x, wit_owner):
    """One backward step for sorted disjoint intervals ``[lo, hi]``.

    Pieces that share an endpoint (which happens exactly at critical points)
    are merged and lose the diffeomorphism flag.  Witness points (known
    ``K``-points) are pulled back along and re-assigned to the new pieces.
    """
    new_lo, new_hi, new_src, wx, wsrc = [], [], [], [], []
    for br in branches:
        a = np.maximum(lo, br.image.lo)
        c = np.minimum(hi, br.image.hi)
        ok = a <= c
        if ok.any():
            ia = fmap.invert(br, a[ok])
            ic = fmap.invert(br, c[ok])
            new_lo.append(np.minimum(ia, ic))
            new_hi.append(np.maximum(ia, ic))
            new_src.append(np.nonzero(ok)[0])
        if wit_x.size:
            xw = fmap.invert(br, wit_x)
            good = np.isfinite(xw)
            wx.append(xw[good])
            wsrc.append(wit_owner[good])
    if not new_lo:
        empty = np.array([])
        return empty, empty, np.array([], dtype=bool), empty, np.array([], dtype=int)
    L = np.concatenate(new_lo)
    H = np.concatenate(new_hi)
    S = np.concatenate(new_src)
    order = np.lexsort((H, L))
    L, H, S = L[order], H[order], S[order]
    join = np.zeros(L.size, dtype=bool)
    join[1:] = L[1:] <= H[:-1]
    group = np.cumsum(~join) - 1
    starts = np.nonzero(~join)[0]
    out_lo = L[starts]
    out_hi = np.maximum.reduceat(H, starts)
    sizes = np.diff(np.append(starts, L.size))
    out_diffeo = np.logical_and.reduceat(diffeo[S], starts) & (sizes == 1)
    if wx:
        X = np.concatenate(wx)
        k = np.searchsorted(out_lo, X, side="right") - 1
        inside = (k >= 0) & (X <= out_hi[np.clip(k, 0, None)])
        X, owner = X[inside], k[inside]
    else:
        X, owner = np.array([]), np.array([], dtype=int)
    del group
    return out_lo, out_hi, out_diffeo, X, owner


def pull_back_components(fmap: MultimodalMap, repeller: Repeller, T: Interval, n, *, margin=None, singular=None):
    """Components of ``f^{-n}(T)`` that meet ``K``.

    Preimages are taken over the map's monotone pieces on a margin
    neighbourhood of ``K``'s components.  ``K``-membership is certified by
    carrying backward descendants of sample points of ``K`` lying in ``T``
    (for repellers equal to their effective set, overlap suffices).
    """
    branches = repeller.neighborhood_branches(margin)
    if singular is None:
        singular = singular_set(fmap, repeller).all
    sing = np.sort(np.asarray(singular, dtype=float))
    lo = np.array([T.lo])
    hi = np.array([T.hi])
    diffeo = np.array([True])
    if repeller.invariant:
        wit_x = np.array([])
    else:
        sample = repeller.k_sample()
        wit_x = sample[(sample >= T.lo) & (sample <= T.hi)]
    wit_owner = np.zeros(wit_x.size, dtype=int)

    def meets_mask(lo, hi, owner):
        if repeller.invariant:
            m = np.zeros(lo.size, dtype=bool)
            for iv in repeller.effective:
                m |= (lo <= iv.hi) & (hi >= iv.lo)
            return m
        m = np.zeros(lo.size, dtype=bool)
        m[owner] = True
        return m

    for _ in range(n):
        keep = meets_mask(lo, hi, wit_owner)
        remap = np.cumsum(keep) - 1
        lo, hi, diffeo = lo[keep], hi[keep], diffeo[keep]
        wit_x, wit_owner = wit_x[keep[wit_owner]], remap[wit_owner[keep[wit_owner]]]
        lo, hi, diffeo, wit_x, wit_owner = _pull_back_level(fmap, branches, lo, hi, diffeo, wit_x, wit_owner)
        if not repeller.invariant:
            ok = repeller.in_effective(wit_x)
            wit_x, wit_owner = wit_x[ok], wit_owner[ok]
        if lo.size == 0:
            break
    meets = meets_mask(lo, hi, wit_owner)
    k = np.searchsorted(sing, lo, side="left")
    cs = (k < sing.size) & (sing[np.clip(k, 0, max(sing.size - 1, 0))] <= hi) if sing.size else np.zeros(lo.size, bool)
    out = []
    for l, h, d, m, c in zip(lo, hi, diffeo, meets, cs):
        if not m and n > 0:
            continue
        out.append(PullBack(Interval(float(l), float(h)), n, bool(m), bool(d), bool(c)))
    return out


# ---------------------------------------------------------------------------
# periodic orbits


@dataclass(frozen=True)
class PeriodicOrbit:
    points: tuple
    period: int
    multiplier: float
    chi: float
    kind: str
    word: tuple = field(default=(), compare=False)

    def residual(self, fmap):
        """Largest one-step closure error ``|f(p_i) - p_{i+1}|`` along the cycle."""
        p = np.asarray(self.points)
        return float(np.max(np.abs(fmap(p) - np.roll(p, -1))))

    def to_dict(self):
        return {
            "points": list(self.points),
            "period": self.period,
            "multiplier": self.multiplier,
            "chi": self.chi,
            "kind": self.kind,
            "word": list(self.word),
        }


def classify_multiplier(multiplier, period, band=INDIFFERENCE_BAND):
    r = abs(multiplier) ** (1.0 / period) if multiplier != 0 else 0.0
    if 1.0 - band <= r <= 1.0 + band:
        return "indifferent"
    return "hyperbolic_repelling" if r > 1.0 else "attracting"


def admissible_cylinders(fmap: MultimodalMap, branches, n, budget=DEFAULT_CYLINDER_BUDGET):
    """Intervals ``C_w`` with ``f^k(C_w)`` inside branch ``w_k`` for ``k < n``.

    Returns ``(lo, hi, words)`` where ``words`` is an ``(N, n)`` integer array.
    """
    nb = len(branches)
    if nb**n > budget:
        raise CylinderBudgetExceeded(f"{nb}^{n} cylinders exceed the budget {budget}")
    lo = np.array([br.interval.lo for br in branches])
    hi = np.array([br.interval.hi for br in branches])
    words = np.arange(nb).reshape(nb, 1)
    for _ in range(n - 1):
        nl, nh, nw = [], [], []
        for b, br in enumerate(branches):
            a = np.maximum(lo, br.image.lo)
            c = np.minimum(hi, br.image.hi)
            ok = a < c
            if not ok.any():
                continue
            ia = fmap.invert(br, a[ok])
            ic = fmap.invert(br, c[ok])
            nl.append(np.minimum(ia, ic))
            nh.append(np.maximum(ia, ic))
            nw.append(np.hstack([np.full((int(ok.sum()), 1), b), words[ok]]))
        lo = np.concatenate(nl)
        hi = np.concatenate(nh)
        words = np.vstack(nw)
    return lo, hi, words


def _iterate(fmap, x, n):
    for _ in range(n):
        x = fmap(x)
    return x


def _fixed_points_in_cylinders(fmap, lo, hi, n):
    """Root of ``f^n(x) - x`` in each cylinder with a sign change (NaN otherwise)."""
    ga = _iterate(fmap, lo, n) - lo
    gb = _iterate(fmap, hi, n) - hi
    has = (ga * gb <= 0) & (lo < hi) | (ga == 0) | (gb == 0)
    a = lo[has].copy()
    b = hi[has].copy()
    sa = np.sign(ga[has])
    x_exact = np.where(ga[has] == 0, a, np.where(gb[has] == 0, b, np.nan))
    for _ in range(64):
        m = 0.5 * (a + b)
        gm = _iterate(fmap, m, n) - m
        same = np.sign(gm) == sa
        a = np.where(same, m, a)
        b = np.where(same, b, m)
    x = np.where(np.isfinite(x_exact), x_exact, 0.5 * (a + b))
    out = np.full(lo.shape, np.nan)
    out[has] = x
    return out


def _word_codes(words, base):
    n = words.shape[1]
    powers = base ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return words.astype(np.int64) @ powers


def periodic_points(fmap: MultimodalMap, repeller: Repeller, n, *, branches=None, budget=DEFAULT_CYLINDER_BUDGET):
    """All periodic orbits whose period divides ``n``, each reported once.

    One fixed point of ``f^n`` is sought per admissible itinerary cylinder;
    the cyclic rotations of a word give the other points of the same orbit,
    so every orbit point is itself located to working precision.
    """
    branches = repeller.branches if branches is None else branches
    if n < 1:
        return []
    lo, hi, words = admissible_cylinders(fmap, branches, n, budget)
    x = _fixed_points_in_cylinders(fmap, lo, hi, n)
    ok = np.isfinite(x)
    x, words = x[ok], words[ok]
    # a fixed point exactly on an endpoint shared by two cylinders is found twice
    on_edge = (x == lo[ok]) | (x == hi[ok])
    order = np.argsort(x, kind="stable")
    xs = x[order]
    dup = np.zeros(xs.size, dtype=bool)
    dup[1:] = (np.diff(xs) == 0) & on_edge[order][1:]
    keep = np.sort(order[~dup])
    x, words = x[keep] + 0.0, words[keep]
    base = max(len(branches), 2)
    codes = _word_codes(words, base)
    point_of = dict(zip(codes.tolist(), x.tolist()))
    shift = base ** (n - 1)
    with np.errstate(divide="ignore"):
        logd_all = np.log(np.abs(fmap.d1(x)))
    logd_of = dict(zip(codes.tolist(), logd_all.tolist()))
    seen = set()
    orbits = []
    for code, w in zip(codes.tolist(), words):
        if code in seen:
            continue
        rot = [code]
        c = code
        for _ in range(n - 1):
            c = (c % shift) * base + c // shift
            rot.append(c)
        seen.update(rot)
        period = next(d for d in range(1, n + 1) if n % d == 0 and rot[d % n] == code)
        cycle = rot[:period]
        if any(c not in point_of for c in cycle):
            continue
        pts = [point_of[c] for c in cycle]
        lds = [logd_of[c] for c in cycle]
        start = int(np.argmin(pts))
        pts = pts[start:] + pts[:start]
        lds = lds[start:] + lds[:start]
        wrd = tuple(int(v) for v in np.roll(w[:period], -start))
        sign = 1.0
        for p in pts:
            sign *= math.copysign(1.0, float(fmap.d1(p)))
        total = math.fsum(lds)
        mult = sign * math.exp(total) if total < 700 else sign * math.inf
        chi = total / period
        kind = classify_multiplier(mult, period) if math.isfinite(mult) else "hyperbolic_repelling"
        orbits.append(PeriodicOrbit(tuple(pts), period, mult, chi, kind, wrd))
    orbits.sort(key=lambda o: (o.period, o.points[0]))
    return orbits


def orbit_log_multipliers(orbits, n):
    """``(log|(f^n)'|, count)`` pairs of the fixed points of ``f^n`` from orbits of period dividing ``n``."""
    out = []
    for o in orbits:
        if n % o.period == 0:
            out.append((o.chi * n, o.period))
    return out


# ---------------------------------------------------------------------------
# diagnostics


def rule_II_check(fmap: MultimodalMap, repeller: Repeller, x, n, *, running=False):
    """Averaged critical-approach sum with the closest approach omitted.

    For each critical point ``c`` this is ``(1/n) * sum' -log|f^j(x) - c|``
    over ``1 <= j <= n`` where the primed sum drops the single closest
    approach.  The maximum over ``c`` is returned (with the running values
    when ``running`` is true).
    """
    crit = np.asarray(fmap.critical_locations, dtype=float)
    if crit.size == 0:
        return (0.0, np.zeros(n)) if running else 0.0
    orbit = np.empty(n)
    y = float(x)
    for j in range(n):
        y = float(fmap(y))
        orbit[j] = y
    dist = np.abs(orbit[:, None] - crit[None, :])
    if np.any(dist == 0):
        j = int(np.argwhere(dist == 0)[0][0])
        raise OrbitHitsCritical(f"f^{j + 1}({x}) is a critical point")
    terms = -np.log(dist)
    csum = np.cumsum(terms, axis=0)
    cmax = np.maximum.accumulate(terms, axis=0)
    counts = np.arange(1, n + 1)[:, None]
    run = ((csum - cmax) / counts).max(axis=1)
    return (float(run[-1]), run) if running else float(run[-1])


@dataclass(frozen=True)
class WeakIsolationReport:
    n_max: int
    margin: float
    checked_orbits: int
    violations: tuple

    @property
    def holds(self):
        return not self.violations

    def to_dict(self):
        return {
            "n_max": self.n_max,
            "margin": self.margin,
            "checked_orbits": self.checked_orbits,
            "holds_up_to_n_max": self.holds,
            "violations": [v for v in self.violations],
        }


def weak_isolation_check(fmap: MultimodalMap, repeller: Repeller, n_max, margin=None):
    """Periodic orbits of period ``<= n_max`` inside the margin neighbourhood but not in ``K``."""
    margin = repeller.default_margin() if margin is None else margin
    branches = repeller.neighborhood_branches(margin)
    seen = set()
    checked = 0
    viol = []
    for n in range(1, n_max + 1):
        for o in periodic_points(fmap, repeller, n, branches=branches):
            if o.period != n:
                continue
            key = round(o.points[0], 10)
            if key in seen:
                continue
            seen.add(key)
            checked += 1
            inside = repeller.in_effective(np.asarray(o.points))
            if inside.all():
                continue
            it = itinerary(fmap, o.points[int(np.argmax(~inside))], o.period)
            viol.append(
                {
                    "period": o.period,
                    "points": list(o.points),
                    "itinerary": "".join(str(s) for s in it.symbols),
                    "outside_points": int((~inside).sum()),
                }
            )
    return WeakIsolationReport(n_max, float(margin), checked, tuple(viol))
