"""Polynomial interval maps, their repellers, branch inverses and singular sets.

A :class:`MultimodalMap` is a polynomial restricted to a finite union of
compact intervals.  It is cut at the zeros of its derivative into monotone
laps, each of which can be inverted by bracketed bisection.  A
:class:`Repeller` adds the data needed to describe the maximal invariant set
``K``: the interval components and optional open holes whose forward visits
are forbidden.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import OutOfDomain

EPS = np.finfo(float).eps
ROOT_BRACKET = 1e-13


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (self.lo <= self.hi):
            raise ValueError(f"Interval needs lo <= hi, got ({self.lo}, {self.hi})")

    @property
    def length(self):
        return self.hi - self.lo

    @property
    def mid(self):
        return 0.5 * (self.lo + self.hi)

    def contains(self, x, *, open_=False):
        if open_:
            return (x > self.lo) & (x < self.hi)
        return (x >= self.lo) & (x <= self.hi)

    def intersect(self, other):
        lo, hi = max(self.lo, other.lo), min(self.hi, other.hi)
        return Interval(lo, hi) if lo <= hi else None

    def expand(self, r):
        return Interval(self.lo - r, self.hi + r)

    def as_tuple(self):
        return (self.lo, self.hi)


class CriticalPoint(NamedTuple):
    location: float
    kind: str  # "turning" or "inflection"


@dataclass(frozen=True)
class Branch:
    """A monotone piece of the map: ``f`` restricted to ``interval``.

    ``lap_index`` is the 0-based position of the maximal lap the piece comes
    from; pieces cut by holes share the index of their lap.
    """

    interval: Interval
    orientation: int
    lap_index: int
    image: Interval
    lo_critical: bool = False
    hi_critical: bool = False


class Preimage(NamedTuple):
    x: float
    lap: int
    tangent: bool


class Membership(enum.Enum):
    IN_K = "InK"
    NOT_IN_K = "NotInK"
    UNKNOWN = "UnknownAtHorizon"


def _merge_sorted_points(points, tol):
    out = []
    for p in sorted(points):
        if not out or p - out[-1] > tol:
            out.append(p)
    return out


class MultimodalMap:
    """A polynomial map on a finite union of closed intervals.

    Parameters
    ----------
    name : str
    coefficients : sequence of float
        Polynomial coefficients in ascending order of degree.
    domain : sequence of Interval
        Pairwise disjoint components, listed left to right.
    margin : float, optional
        Half-width of the neighbourhood ``U`` on which evaluation is allowed.
    lipschitz_bound : float, optional
        Declared bound for ``sup |f'|`` over ``U``; computed on a grid if omitted.
    """

    def __init__(self, name, coefficients, domain, *, margin=None, lipschitz_bound=None):
        self.name = str(name)
        self.coefficients = np.trim_zeros(np.asarray(coefficients, dtype=float), "b")
        if self.coefficients.size < 2:
            raise ValueError("map must be a non-constant polynomial")
        self._d1 = npoly.polyder(self.coefficients, 1)
        self._d2 = npoly.polyder(self.coefficients, 2)
        self.domain = tuple(sorted(domain, key=lambda iv: iv.lo))
        for a, b in zip(self.domain, self.domain[1:]):
            if a.hi >= b.lo:
                raise ValueError("domain components must be pairwise disjoint")
        span = self.domain[-1].hi - self.domain[0].lo
        self.scale = max(span, max(abs(self.domain[0].lo), abs(self.domain[-1].hi)), 1.0)
        if margin is None:
            gaps = [b.lo - a.hi for a, b in zip(self.domain, self.domain[1:])]
            margin = min([0.02 * span] + [g / 4 for g in gaps])
        self.margin = float(margin)
        self.neighborhood = tuple(iv.expand(self.margin) for iv in self.domain)
        self.critical_points = self._find_critical_points()
        self.laps = self.branches_over(self.domain)
        if lipschitz_bound is None:
            grid = np.concatenate([np.linspace(iv.lo, iv.hi, 2001) for iv in self.neighborhood])
            lipschitz_bound = float(np.max(np.abs(npoly.polyval(grid, self._d1))))
        self.lipschitz_bound = float(lipschitz_bound)

    def __repr__(self):
        return f"MultimodalMap({self.name!r})"

    # evaluation -----------------------------------------------------------
    def in_neighborhood(self, x):
        x = np.asarray(x, dtype=float)
        ok = np.zeros(x.shape, dtype=bool)
        for iv in self.neighborhood:
            ok |= (x >= iv.lo) & (x <= iv.hi)
        return ok

    def _check(self, x):
        if not np.all(self.in_neighborhood(x)):
            bad = np.asarray(x, dtype=float)[~self.in_neighborhood(x)]
            raise OutOfDomain(f"{self.name}: point {float(np.ravel(bad)[0])!r} outside the declared neighbourhood")

    def __call__(self, x):
        return npoly.polyval(x, self.coefficients)

    def evaluate(self, x):
        self._check(x)
        return self(x)

    def d1(self, x):
        return npoly.polyval(x, self._d1)

    def d2(self, x):
        return npoly.polyval(x, self._d2)

    def derivative(self, x, order=1):
        self._check(x)
        if order == 1:
            return self.d1(x)
        if order == 2:
            return self.d2(x)
        raise ValueError("order must be 1 or 2")

    # structure ------------------------------------------------------------
    def _find_critical_points(self):
        roots = np.roots(self._d1[::-1]) if self._d1.size > 1 else np.array([])
        found = []
        for r in roots:
            if abs(r.imag) > 1e-9:
                continue
            c = float(r.real)
            for _ in range(3):
                d2 = self.d2(c)
                if d2 == 0.0:
                    break
                step = self.d1(c) / d2
                if abs(step) > 1e-6:
                    break
                c -= step
            if any(iv.lo < c < iv.hi for iv in self.domain):
                found.append(c)
        found = _merge_sorted_points(found, 1e-12 * self.scale)
        out = []
        for c in found:
            h = 1e-6 * self.scale
            kind = "turning" if self.d1(c - h) * self.d1(c + h) < 0 else "inflection"
            out.append(CriticalPoint(float(c), kind))
        return tuple(out)

    @property
    def critical_locations(self):
        return tuple(c.location for c in self.critical_points)

    def branches_over(self, intervals: Sequence[Interval], extra_cuts=()):
        """Split the given intervals at critical points (and ``extra_cuts``) into monotone pieces."""
        crit = self.critical_locations
        splits = sorted(set(crit) | set(float(c) for c in extra_cuts))
        lap_cuts = []
        for iv in self.domain:
            lap_cuts.append(iv.lo)
            lap_cuts.extend(c for c in crit if iv.lo < c < iv.hi)
        lap_cuts = np.asarray(lap_cuts)
        out = []
        for iv in sorted(intervals, key=lambda v: v.lo):
            cuts = [iv.lo] + [c for c in splits if iv.lo < c < iv.hi] + [iv.hi]
            for lo, hi in zip(cuts, cuts[1:]):
                lo, hi = float(lo), float(hi)
                if hi <= lo:
                    continue
                mid = 0.5 * (lo + hi)
                lap = int(np.searchsorted(lap_cuts, mid, side="right")) - 1
                lap = max(lap, 0)
                orient = 1 if self.d1(mid) > 0 else -1
                flo, fhi = float(self(lo)), float(self(hi))
                out.append(
                    Branch(
                        Interval(lo, hi),
                        orient,
                        lap,
                        Interval(min(flo, fhi), max(flo, fhi)),
                        lo in crit,
                        hi in crit,
                    )
                )
        return tuple(out)

    # inversion ------------------------------------------------------------
    def invert(self, branch: Branch, ys):
        """Root of ``f(x) = y`` on ``branch`` for every ``y`` (NaN when none).

        Bisection down to a bracket of width ``1e-13`` followed by a single
        safeguarded Newton step.  Values equal to an endpoint image snap to
        that endpoint exactly.
        """
        ys = np.atleast_1d(np.asarray(ys, dtype=float))
        lo, hi = branch.interval.lo, branch.interval.hi
        flo, fhi = float(self(lo)), float(self(hi))
        snap_tol = 4 * EPS * self.scale
        ymin, ymax = branch.image.lo, branch.image.hi
        inside = (ys >= ymin - snap_tol) & (ys <= ymax + snap_tol)
        out = np.full(ys.shape, np.nan)
        if not inside.any():
            return out
        y = ys[inside]
        s = branch.orientation
        a = np.full(y.shape, lo)
        b = np.full(y.shape, hi)
        iters = max(1, int(math.ceil(math.log2(max(hi - lo, ROOT_BRACKET) / ROOT_BRACKET))))
        for _ in range(iters):
            m = 0.5 * (a + b)
            below = s * (self(m) - y) < 0
            a = np.where(below, m, a)
            b = np.where(below, b, m)
        x = 0.5 * (a + b)
        fx = self(x) - y
        dx = self.d1(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = x - fx / dx
        good = np.isfinite(xn) & (xn >= a) & (xn <= b)
        good &= np.abs(self(np.where(good, xn, x)) - y) <= np.abs(fx)
        x = np.where(good, xn, x)
        x = np.where(np.abs(y - flo) <= snap_tol, lo, x)
        x = np.where(np.abs(y - fhi) <= snap_tol, hi, x)
        out[inside] = x
        return out

    def preimages(self, y, branches=None):
        """All preimages of a scalar ``y`` over ``branches`` (default: laps)."""
        branches = self.laps if branches is None else branches
        crit = set(self.critical_locations)
        out = []
        for br in branches:
            x = float(self.invert(br, [y])[0])
            if math.isnan(x):
                continue
            if out and out[-1].x == x:
                continue  # shared lap boundary: left lap wins
            out.append(Preimage(x, br.lap_index, x in crit))
        return out


# ---------------------------------------------------------------------------
# repellers


def _subtract_holes(components, holes):
    pieces = list(components)
    for h in holes:
        nxt = []
        for iv in pieces:
            if h.hi <= iv.lo or h.lo >= iv.hi:
                nxt.append(iv)
                continue
            if h.lo >= iv.lo:
                nxt.append(Interval(iv.lo, h.lo))
            if h.hi <= iv.hi:
                nxt.append(Interval(h.hi, iv.hi))
        pieces = nxt
    return tuple(sorted(pieces, key=lambda v: v.lo))


@dataclass(frozen=True)
class SingularSet:
    crit: tuple
    no_points: tuple
    all: tuple = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "all", tuple(sorted(set(self.crit) | set(self.no_points))))


class Repeller:
    """The maximal repeller of ``fmap`` inside ``components`` minus ``holes``.

    ``K`` is the set of points whose whole forward orbit stays in the closed
    set ``components \\ holes`` (holes are open).
    """

    def __init__(self, fmap: MultimodalMap, components=None, holes=(), horizon=64, name=None):
        self.map = fmap
        self.name = name or fmap.name
        self.components = tuple(components) if components is not None else fmap.domain
        self.holes = tuple(sorted(holes, key=lambda v: v.lo))
        self.horizon = int(horizon)
        self.effective = _subtract_holes(self.components, self.holes)
        self.branches = fmap.branches_over(self.effective)
        self.invariant = all(
            any(br.image.lo >= iv.lo - 1e-14 and br.image.hi <= iv.hi + 1e-14 for iv in self.effective)
            for br in self.branches
        )
        self.certified = self._certified_fixed_points()

    def __repr__(self):
        return f"Repeller({self.name!r})"

    @property
    def map_id(self):
        return self.map.name

    def in_effective(self, x):
        x = np.asarray(x, dtype=float)
        ok = np.zeros(x.shape, dtype=bool)
        for iv in self.effective:
            ok |= (x >= iv.lo) & (x <= iv.hi)
        return ok

    def neighborhood_branches(self, margin=None):
        """Monotone pieces of the map over a margin-neighbourhood of the effective set."""
        if margin is None:
            margin = self.default_margin()
        grown = []
        for iv in self.effective:
            g = iv.expand(margin)
            if grown and g.lo <= grown[-1].hi:
                grown[-1] = Interval(grown[-1].lo, g.hi)
            else:
                grown.append(g)
        allowed = []
        for g in grown:
            for nb in self.map.neighborhood:
                piece = g.intersect(nb)
                if piece is not None and piece.length > 0:
                    allowed.append(piece)
        return self.map.branches_over(allowed)

    def default_margin(self):
        gaps = [b.lo - a.hi for a, b in zip(self.effective, self.effective[1:])]
        return min([self.map.margin] + [g / 4 for g in gaps])

    def _certified_fixed_points(self):
        coeffs = self.map.coefficients.copy()
        coeffs[1] -= 1.0
        roots = np.roots(np.trim_zeros(coeffs, "b")[::-1])
        pts = []
        for r in roots:
            if abs(r.imag) > 1e-9:
                continue
            x = float(r.real)
            d = self.map.d1(x) - 1.0
            if d != 0:
                x -= (self.map(x) - x) / d
            if self.in_effective(x):
                pts.append(x)
        return tuple(_merge_sorted_points(pts, 1e-12))

    def membership(self, x, horizon=None):
        """Three-valued membership of ``x`` in ``K``."""
        horizon = self.horizon if horizon is None else horizon
        x = float(x)
        if not self.in_effective(x):
            return Membership.NOT_IN_K
        if self.invariant:
            return Membership.IN_K
        tol_cert = 1e-12 * self.map.scale
        cert = np.asarray(self.certified)
        y = x
        for _ in range(horizon):
            if cert.size and np.min(np.abs(cert - y)) <= tol_cert:
                return Membership.IN_K
            y = float(self.map(y))
            if not self.in_effective(y):
                return Membership.NOT_IN_K
            if abs(y - x) <= 1e-10 * self.map.scale:
                return Membership.IN_K
        return Membership.UNKNOWN

    # sampling of K --------------------------------------------------------
    def k_sample(self, depth=None, max_points=60000):
        """Sorted points of ``K``: all preimages of the certified fixed points up to ``depth``."""
        if depth is None:
            depth = self._auto_depth(max_points)
        key = (depth, max_points)
        cache = self.__dict__.setdefault("_sample_cache", {})
        if key in cache:
            return cache[key]
        level = np.asarray(self.certified, dtype=float)
        pts = [level]
        for _ in range(depth):
            if level.size == 0:
                break
            level = np.concatenate([self.map.invert(br, level) for br in self.branches])
            level = np.unique(level[np.isfinite(level)])
            pts.append(level)
            if sum(p.size for p in pts) > max_points:
                break
        cache[key] = np.unique(np.concatenate(pts))
        return cache[key]

    def _auto_depth(self, max_points=60000):
        return max(4, int(math.log(max_points / max(len(self.certified), 1)) / math.log(max(len(self.branches), 2))))

    def is_two_sided(self, y, depth=None):
        """Whether ``y`` is accumulated by ``K`` from both sides.

        Exact for repellers equal to their (invariant) effective set; for the
        others the nearest sample on each side must shrink when the sample is
        deepened, which is reliable for Markov repellers.
        """
        if self.invariant:
            return any(iv.lo < y < iv.hi for iv in self.effective)
        depth = self._auto_depth() if depth is None else depth
        deep = self.k_sample(depth)
        shallow = self.k_sample(max(depth - 3, 1))
        tol = 1e-13 * self.map.scale

        def sides(sample):
            left = sample[sample < y - tol]
            right = sample[sample > y + tol]
            dl = y - left[-1] if left.size else math.inf
            dr = right[0] - y if right.size else math.inf
            return dl, dr

        dl0, dr0 = sides(shallow)
        dl1, dr1 = sides(deep)
        left_ok = math.isfinite(dl1) and (dl1 <= 0.5 * dl0 or dl1 < 1e-9)
        right_ok = math.isfinite(dr1) and (dr1 <= 0.5 * dr0 or dr1 < 1e-9)
        return left_ok and right_ok


# ---------------------------------------------------------------------------
# module-level operations


def evaluate(fmap: MultimodalMap, x):
    return fmap.evaluate(x)


def derivative(fmap: MultimodalMap, x, order=1):
    return fmap.derivative(x, order)


def branch_preimages(fmap: MultimodalMap, y):
    return fmap.preimages(y)


def membership(repeller: Repeller, x):
    return repeller.membership(x)


def singular_set(fmap: MultimodalMap, repeller: Repeller) -> SingularSet:
    crit = tuple(
        c.location for c in fmap.critical_points if any(iv.lo <= c.location <= iv.hi for iv in repeller.effective)
    )
    candidates = set()
    for iv in repeller.effective:
        candidates.update((iv.lo, iv.hi))
    candidates.update(c.location for c in fmap.critical_points if c.kind == "turning" and c.location in crit)
    no_points = []
    for e in sorted(candidates):
        if repeller.membership(e) is Membership.NOT_IN_K:
            continue
        if repeller.is_two_sided(e):
            continue
        fe = float(fmap(e))
        if repeller.is_two_sided(fe):
            no_points.append(e)
    return SingularSet(crit, tuple(no_points))
