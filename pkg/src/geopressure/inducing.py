"""Nice sets, the canonical induced map and the two-variable pressure.

A nice set is a union of small open intervals ``V^c`` around the points of
the restricted singular set whose boundary orbits never come back inside.
Endpoints are taken from ``Q_n``, the backward orbit of a periodic orbit up
to depth ``n``; because the forward orbit of a ``Q_n`` point is known
exactly (it walks down the preimage tree and then cycles), the boundary
check is exact for every horizon.

The induced map sends each branch domain ``W`` onto a component of ``V`` at
its least good time ``m_W``.  Its pressure ``𝒫(t, p)`` is bracketed by the
Perron root of a small matrix indexed by singular points, with sup and inf
derivative weights.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import (
    BranchBudgetExceeded,
    ComputationError,
    Divergent,
    NoSignChange,
    NoSuitableOrbit,
    VerificationFailed,
)
from .map_core import Interval, MultimodalMap, Repeller, singular_set
from .orbit_engine import periodic_points, preimage_tree

log = logging.getLogger(__name__)

DEFAULT_BRANCH_BUDGET = 3_000_000
EPSILON_FLOOR = 0.1


# ---------------------------------------------------------------------------
# Q_n and nice sets


@dataclass
class _QPoints:
    """Backward orbits of a periodic orbit, kept with their forward paths."""

    orbit: tuple
    trees: list

    def level_points(self, n):
        pts = [tr.points[k] for tr in self.trees for k in range(min(n, tr.depth) + 1)]
        return np.unique(np.concatenate(pts))

    def forward_orbit(self, x, horizon):
        """Exact forward orbit of a ``Q_n`` point ``x`` for ``horizon`` steps."""
        for tr in self.trees:
            for k in range(tr.depth + 1):
                hit = np.nonzero(tr.points[k] == x)[0]
                if hit.size:
                    idx = int(hit[0])
                    path = []
                    for j in range(k, 0, -1):
                        idx = int(tr.parent[j][idx])
                        path.append(float(tr.points[j - 1][idx]))
                    if len(path) < horizon:
                        path.extend(self.orbit)
                    return path[:horizon]
        raise KeyError(x)


def candidate_orbits(fmap: MultimodalMap, repeller: Repeller, max_period=4):
    """Repelling orbits of period ``<= max_period`` that avoid ``S'`` and its forward orbits.

    Sorted by period, then by decreasing distance to the avoided points.
    """
    sing = singular_set(fmap, repeller).all
    avoid = list(sing)
    for c in sing:
        y = float(c)
        for _ in range(64):
            y = float(fmap(y))
            avoid.append(y)
            if not repeller.in_effective(y):
                break
    avoid = np.asarray(avoid) if avoid else np.zeros(0)
    ranked = []
    for n in range(1, max_period + 1):
        for o in periodic_points(fmap, repeller, n):
            if o.period != n or o.kind != "hyperbolic_repelling":
                continue
            pts = np.asarray(o.points)
            gap = float(np.min(np.abs(pts[:, None] - avoid[None, :]))) if avoid.size else 1.0
            if gap > 1e-9:
                ranked.append(((n, -round(gap, 9), float(pts.min())), tuple(sorted(float(p) for p in o.points))))
    ranked.sort()
    return [orb for _, orb in ranked]


def choose_orbit(fmap: MultimodalMap, repeller: Repeller, max_period=4):
    """The first of :func:`candidate_orbits`."""
    orbits = candidate_orbits(fmap, repeller, max_period)
    if not orbits:
        raise NoSuitableOrbit(f"{fmap.name}: no repelling orbit of period <= {max_period} avoids the singular orbits")
    return orbits[0]


def _q_points(fmap, repeller, orbit, depth):
    return _QPoints(tuple(orbit), [preimage_tree(fmap, repeller, z, depth) for z in orbit])


@dataclass(frozen=True)
class NiceSet:
    """Open intervals ``V^c`` around singular points ``c``.

    ``max_boundary_return_residual`` is the smallest distance from a
    boundary orbit point to the set over the checked horizon.
    """

    components: tuple  # ((c, Interval), ...) sorted by c
    verification_horizon: int
    max_boundary_return_residual: float
    depth: int = 0
    orbit: tuple = ()
    low_confidence: bool = False

    @property
    def singular_points(self):
        return tuple(c for c, _ in self.components)

    def component(self, c):
        for cc, iv in self.components:
            if cc == c:
                return iv
        raise KeyError(c)

    def distance(self, y):
        """0 inside (or on the boundary of) some component, else the gap to the nearest one."""
        d = math.inf
        for _, iv in self.components:
            if iv.lo <= y <= iv.hi:
                return 0.0
            d = min(d, iv.lo - y if y < iv.lo else y - iv.hi)
        return d

    @property
    def radius(self):
        return max(max(c - iv.lo, iv.hi - c) for c, iv in self.components)

    def to_dict(self):
        return {
            "components": [{"c": c, "lo": iv.lo, "hi": iv.hi} for c, iv in self.components],
            "verification_horizon": self.verification_horizon,
            "max_boundary_return_residual": self.max_boundary_return_residual,
            "depth": self.depth,
            "orbit": list(self.orbit),
            "low_confidence": self.low_confidence,
        }


def _nearest_components(points, singular, effective):
    comps = []
    for c in singular:
        left = points[points < c]
        right = points[points > c]
        a = float(left.max()) if left.size else None
        b = float(right.min()) if right.size else None
        if a is None and b is None:
            return None
        # a boundary point of K gets a symmetric interval poking out of K
        if a is None:
            a = c - (b - c)
        if b is None:
            b = c + (c - a)
        comps.append((float(c), Interval(a, b)))
    for (_, u), (_, v) in zip(comps, comps[1:]):
        if u.hi > v.lo:
            return None
    return tuple(comps)


def _boundary_residual(q, comps, target, horizon):
    """Smallest distance from the orbits of the endpoints of ``comps`` to ``target``."""
    if horizon <= 0:
        return math.inf
    res = math.inf
    for _, iv in comps:
        for b in (iv.lo, iv.hi):
            try:
                orbit = q.forward_orbit(b, horizon)
            except KeyError:
                continue  # mirrored endpoint outside K
            for y in orbit:
                res = min(res, target.distance(y))
    return res


def _nice_at_depth(q, singular, effective, n, horizon):
    comps = _nearest_components(q.level_points(n), singular, effective)
    if comps is None:
        return None
    probe = NiceSet(comps, horizon, 0.0, n, q.orbit)
    res = _boundary_residual(q, comps, probe, horizon)
    return NiceSet(comps, horizon, res, n, q.orbit, low_confidence=horizon == 0)


def build_nice_set(fmap: MultimodalMap, repeller: Repeller, radius_target, horizon=200, *, orbit=None, max_depth=8):
    """Nice set from the nearest ``Q_n`` points with radius at most ``radius_target``.

    ``n`` grows until every component lies within ``radius_target`` of its
    singular point; if that never happens the deepest verified set is
    returned.
    """
    singular = singular_set(fmap, repeller).all
    if not singular:
        raise NoSuitableOrbit(f"{fmap.name}: empty singular set, nothing to surround")
    orbit = choose_orbit(fmap, repeller) if orbit is None else tuple(orbit)
    q = _q_points(fmap, repeller, orbit, max_depth)
    last = None
    for n in range(1, max_depth + 1):
        ns = _nice_at_depth(q, singular, repeller.effective, n, horizon)
        if ns is None or ns.max_boundary_return_residual <= 0:
            continue
        last = ns
        if ns.radius <= radius_target:
            return ns
    if last is None:
        raise VerificationFailed(f"{fmap.name}: no nice set verified up to Q_{max_depth}")
    return last


@dataclass(frozen=True)
class NiceCouple:
    outer: NiceSet
    inner: NiceSet
    epsilon_scale: float
    couple_residual: float

    def to_dict(self):
        return {
            "outer": self.outer.to_dict(),
            "inner": self.inner.to_dict(),
            "epsilon_scale": self.epsilon_scale,
            "couple_residual": self.couple_residual,
        }


def _epsilon(outer, inner):
    eps = math.inf
    for (c, o), (_, v) in zip(outer.components, inner.components):
        if not (o.lo < v.lo and v.hi < o.hi):
            return -math.inf
        eps = min(eps, min(v.lo - o.lo, o.hi - v.hi) / v.length)
    return eps


def build_nice_couple(
    fmap: MultimodalMap,
    repeller: Repeller,
    radius_target,
    horizon=200,
    *,
    orbit=None,
    outer_gap=1,
    epsilon_floor=EPSILON_FLOOR,
    max_depth=8,
    max_period=3,
):
    """Inner set from ``Q_n`` and outer set from ``Q_{n - outer_gap}``.

    The inner radius must not exceed ``radius_target``; deeper ``n`` is
    tried until both sets are nice, the closure of each inner component sits
    inside the outer one, boundary orbits of the inner set avoid the outer
    set, and the scale ratio reaches ``epsilon_floor``.

    Without an explicit ``orbit`` every candidate orbit up to ``max_period``
    is tried and the couple with the largest inner set wins: a larger inner
    set means shorter returns, so fewer branches fall past the depth cap.
    """
    singular = singular_set(fmap, repeller).all
    if not singular:
        raise NoSuitableOrbit(f"{fmap.name}: empty singular set, nothing to surround")
    orbits = candidate_orbits(fmap, repeller, max_period) if orbit is None else [tuple(orbit)]
    if not orbits:
        raise NoSuitableOrbit(f"{fmap.name}: no repelling orbit of period <= {max_period} avoids the singular orbits")
    best = None
    for orb in orbits:
        couple = _couple_from_orbit(fmap, repeller, orb, singular, radius_target, horizon, outer_gap, epsilon_floor, max_depth)
        if couple is None:
            continue
        size = sum(iv.length for _, iv in couple.inner.components)
        if best is None or size > best[0] + 1e-12:
            best = (size, couple)
    if best is None:
        raise VerificationFailed(f"{fmap.name}: no nice couple of radius <= {radius_target} up to Q_{max_depth}")
    return best[1]


def _couple_from_orbit(fmap, repeller, orbit, singular, radius_target, horizon, outer_gap, epsilon_floor, max_depth):
    q = _q_points(fmap, repeller, orbit, max_depth)
    for n in range(outer_gap + 1, max_depth + 1):
        inner = _nice_at_depth(q, singular, repeller.effective, n, horizon)
        if inner is None or inner.radius > radius_target or inner.max_boundary_return_residual <= 0:
            continue
        outer = _nice_at_depth(q, singular, repeller.effective, n - outer_gap, horizon)
        if outer is None or outer.max_boundary_return_residual <= 0:
            continue
        eps = _epsilon(outer, inner)
        if eps < epsilon_floor:
            continue
        res = _boundary_residual(q, inner.components, outer, horizon)
        if res <= 0:
            continue
        return NiceCouple(outer, inner, eps, res)
    return None


# ---------------------------------------------------------------------------
# induced branches


@dataclass
class InducedBranch:
    """One branch ``f^{m_W}: W -> V^{c_target}`` of the canonical induced map.

    ``log_sup``/``log_inf`` bound ``log|φ_W'|`` for the inverse branch
    ``φ_W = (f^{m_W}|W)^{-1}`` over ``V^{c_target}``.  ``orbit`` holds the
    intervals ``f^n(W)`` for ``n < m_W``.
    """

    W: Interval
    m_W: int
    c_source: float
    c_target: float
    log_sup: float
    log_inf: float
    orbit: tuple = field(default=(), repr=False)

    @property
    def sup_abs_phi_prime(self):
        return math.exp(self.log_sup)

    @property
    def inf_abs_phi_prime(self):
        return math.exp(self.log_inf)

    def to_dict(self):
        return {
            "W": [self.W.lo, self.W.hi],
            "m_W": self.m_W,
            "c_source": self.c_source,
            "c_target": self.c_target,
            "sup_abs_phi_prime": self.sup_abs_phi_prime,
            "inf_abs_phi_prime": self.inf_abs_phi_prime,
        }


@dataclass
class InducedSystem:
    couple: NiceCouple | None
    branches: list
    depth_cap: int
    truncation_mass_bound: float
    singular: tuple
    unreturned_mass: float = 0.0
    orbit_table: tuple | None = field(default=None, repr=False, compare=False)
    _arrays: dict | None = field(default=None, repr=False, compare=False)

    def orbits(self):
        """Flat ``(branch index, lo, hi)`` arrays of the intervals ``f^n(W)``, ``n < m_W``."""
        if self.orbit_table is None:
            idx, lo, hi = [], [], []
            for i, b in enumerate(self.branches):
                for iv in b.orbit:
                    idx.append(i)
                    lo.append(iv.lo)
                    hi.append(iv.hi)
            self.orbit_table = (np.asarray(idx, dtype=int), np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
        return self.orbit_table

    def branch_orbit(self, i):
        idx, lo, hi = self.orbits()
        sel = np.nonzero(idx == i)[0]
        return tuple(Interval(float(lo[j]), float(hi[j])) for j in sel)

    def arrays(self):
        if self._arrays is None:
            idx = {c: i for i, c in enumerate(self.singular)}
            self._arrays = {
                "m": np.array([b.m_W for b in self.branches], dtype=int),
                "src": np.array([idx[b.c_source] for b in self.branches], dtype=int),
                "tgt": np.array([idx[b.c_target] for b in self.branches], dtype=int),
                "log_sup": np.array([b.log_sup for b in self.branches], dtype=float),
                "log_inf": np.array([b.log_inf for b in self.branches], dtype=float),
            }
        return self._arrays

    def branch_counts(self):
        m = self.arrays()["m"]
        return {int(k): int((m == k).sum()) for k in range(1, self.depth_cap + 1)}

    def to_dict(self, max_branches=None):
        br = self.branches if max_branches is None else self.branches[:max_branches]
        return {
            "couple": None if self.couple is None else self.couple.to_dict(),
            "depth_cap": self.depth_cap,
            "branch_count": len(self.branches),
            "branch_counts_by_m": self.branch_counts(),
            "truncation_mass_bound": self.truncation_mass_bound,
            "unreturned_mass": self.unreturned_mass,
            "branches": [b.to_dict() for b in br],
        }


def toy_system(W, m_W, sup_abs_phi_prime, inf_abs_phi_prime=None, orbit=None, c=0.0):
    """A one-branch system with a single singular point ``c``."""
    inf_abs = sup_abs_phi_prime if inf_abs_phi_prime is None else inf_abs_phi_prime
    orbit = tuple(orbit) if orbit is not None else (W,) * m_W
    b = InducedBranch(W, int(m_W), c, c, math.log(sup_abs_phi_prime), math.log(inf_abs), orbit)
    return InducedSystem(None, [b], int(m_W), 0.0, (c,))


def _sample_grid(lo, hi, samples):
    s = np.linspace(0.0, 1.0, samples)
    return lo + (hi - lo) * s


def enumerate_branches(
    fmap: MultimodalMap,
    repeller: Repeller,
    couple: NiceCouple,
    depth_cap,
    *,
    samples=9,
    budget=DEFAULT_BRANCH_BUDGET,
    keep_orbits=True,
):
    """Breadth-first search over pull-backs of the outer set.

    A chain stays alive while every pull-back avoids ``S'``; at each level
    the pulled-back inner interval is a branch when it lies in the inner
    set and is not inside a branch found at an earlier level.  Derivative
    bounds come from ``samples`` points of ``V^c`` pulled back along the
    chain.
    """
    inner, outer = couple.inner, couple.outer
    sing = np.asarray(inner.singular_points)
    vlo = np.array([iv.lo for _, iv in inner.components])
    vhi = np.array([iv.hi for _, iv in inner.components])
    branches_geo = repeller.branches
    k = sing.size
    # level 0: the outer intervals with samples of the inner ones
    olo = np.array([iv.lo for _, iv in outer.components])
    ohi = np.array([iv.hi for _, iv in outer.components])
    pts = np.stack([_sample_grid(vlo[i], vhi[i], samples) for i in range(k)])
    logd = np.zeros_like(pts)
    tgt = np.arange(k)
    levels_lo, levels_hi, levels_parent = [vlo.copy()], [vhi.copy()], [np.full(k, -1)]
    found = []  # per level: (level, indices, source, min log-derivative, max, target)
    acc_lo = np.zeros(0)
    acc_hi = np.zeros(0)
    total = 0
    frontier_mass = 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        for level in range(1, depth_cap + 1):
            n_olo, n_ohi, n_pts, n_logd, n_tgt, n_par = [], [], [], [], [], []
            for br in branches_geo:
                ok = (olo >= br.image.lo) & (ohi <= br.image.hi)
                if not ok.any():
                    continue
                a = fmap.invert(br, olo[ok])
                b = fmap.invert(br, ohi[ok])
                p = fmap.invert(br, pts[ok].ravel()).reshape(-1, samples)
                if br.orientation < 0:
                    a, b = b, a
                    p = p[:, ::-1]
                good = np.isfinite(a) & np.isfinite(b) & np.isfinite(p).all(axis=1)
                parent = np.nonzero(ok)[0]
                d = np.log(np.abs(fmap.d1(p)))
                base = logd[ok]
                if br.orientation < 0:
                    base = base[:, ::-1]
                n_olo.append(a[good])
                n_ohi.append(b[good])
                n_pts.append(p[good])
                n_logd.append((base + d)[good])
                n_tgt.append(tgt[ok][good])
                n_par.append(parent[good])
            if not n_olo:
                break
            olo = np.concatenate(n_olo)
            ohi = np.concatenate(n_ohi)
            pts = np.concatenate(n_pts)
            logd = np.concatenate(n_logd)
            tgt = np.concatenate(n_tgt)
            par = np.concatenate(n_par)
            # good-time requirement: the pull-back must not contain a singular point
            alive = np.ones(olo.size, dtype=bool)
            for c in sing:
                alive &= ~((olo < c) & (ohi > c))
            alive &= np.isfinite(logd).all(axis=1)
            olo, ohi, pts, logd, tgt, par = olo[alive], ohi[alive], pts[alive], logd[alive], tgt[alive], par[alive]
            total += olo.size
            if total > budget:
                raise BranchBudgetExceeded(f"{total} pull-backs exceed the budget {budget} at level {level}")
            wlo, whi = pts[:, 0], pts[:, -1]
            levels_lo.append(wlo)
            levels_hi.append(whi)
            levels_parent.append(par)
            j = np.searchsorted(vlo, wlo, side="right") - 1
            jc = np.clip(j, 0, k - 1)
            inside = (j >= 0) & (wlo >= vlo[jc]) & (whi <= vhi[jc])
            straddle = (j >= 0) & (wlo < vhi[jc]) & (whi > vhi[jc])
            if straddle.any():
                log.warning("%d level-%d pull-backs straddle an inner boundary", int(straddle.sum()), level)
            if acc_lo.size and inside.any():
                i = np.searchsorted(acc_lo, wlo, side="right") - 1
                ic = np.clip(i, 0, acc_lo.size - 1)
                covered = (i >= 0) & (whi <= acc_hi[ic]) & (wlo >= acc_lo[ic])
                inside &= ~covered
            new = np.nonzero(inside)[0]
            if new.size:
                found.append((level, new, jc[new], logd[new].min(axis=1), logd[new].max(axis=1), tgt[new]))
            if new.size:
                acc_lo = np.concatenate([acc_lo, wlo[new]])
                acc_hi = np.concatenate([acc_hi, whi[new]])
                order = np.argsort(acc_lo, kind="stable")
                acc_lo, acc_hi = acc_lo[order], acc_hi[order]
            if level == depth_cap:
                frontier_mass = float(np.sum(whi[new] - wlo[new])) if new.size else 0.0
    out = []
    o_idx, o_lo, o_hi = [], [], []
    for level, idx, src, dmin, dmax, t_idx in found:
        first = len(out)
        for r in range(idx.size):
            W = Interval(float(levels_lo[level][idx[r]]), float(levels_hi[level][idx[r]]))
            out.append(InducedBranch(W, level, float(sing[src[r]]), float(sing[t_idx[r]]), -dmin[r], -dmax[r]))
        if keep_orbits:
            ids = np.arange(first, len(out))
            i = idx
            for lv in range(level, 0, -1):
                o_idx.append(ids)
                o_lo.append(levels_lo[lv][i])
                o_hi.append(levels_hi[lv][i])
                i = levels_parent[lv][i]
    table = None
    if keep_orbits:
        if o_idx:
            table = (np.concatenate(o_idx), np.concatenate(o_lo), np.concatenate(o_hi))
        else:
            table = (np.zeros(0, dtype=int), np.zeros(0), np.zeros(0))
    v_mass = float(np.sum(vhi - vlo))
    w_mass = math.fsum(b.W.length for b in out)
    return InducedSystem(
        couple, out, depth_cap, frontier_mass, tuple(float(c) for c in sing), v_mass - w_mass, orbit_table=table
    )


# ---------------------------------------------------------------------------
# induced pressure


def _log_matrix(system, t, p, which, tail):
    a = system.arrays()
    k = len(system.singular)
    if t >= 0:
        lw = t * (a["log_sup"] if which == "hi" else a["log_inf"])
    else:
        lw = t * (a["log_inf"] if which == "hi" else a["log_sup"])
    lw = lw - p * a["m"]
    logM = np.full((k, k), -np.inf)
    for i in range(k):
        for j in range(k):
            sel = (a["tgt"] == i) & (a["src"] == j)
            if sel.any():
                logM[i, j] = logsumexp(lw[sel])
    if tail and system.depth_cap >= 3:
        logM = np.logaddexp(logM, _geometric_tail(system, t, p, which))
    return logM


def _geometric_tail(system, t, p, which, window=5):
    """Estimated mass of the branches with ``m_W > depth_cap``, per matrix cell.

    The total mass per return time over the last ``window`` levels is fitted
    by ``log M_m = a + b m`` and summed to infinity; each cell gets the share
    it holds over the window.  Single cells are too noisy to fit one by one.
    """
    a = system.arrays()
    k = len(system.singular)
    cap = system.depth_cap
    if t >= 0:
        lw = t * (a["log_sup"] if which == "hi" else a["log_inf"])
    else:
        lw = t * (a["log_inf"] if which == "hi" else a["log_sup"])
    levels = np.arange(max(1, cap - window + 1), cap + 1)
    cell = np.full((k, k, levels.size), -np.inf)
    for i in range(k):
        for j in range(k):
            for r, m in enumerate(levels):
                s = (a["tgt"] == i) & (a["src"] == j) & (a["m"] == m)
                if s.any():
                    cell[i, j, r] = logsumexp(lw[s])
    total = logsumexp(cell.reshape(k * k, -1), axis=0)
    if not np.isfinite(total).all():
        return np.full((k, k), -np.inf)
    slope, icpt = np.polyfit(levels, total, 1)
    q = float(slope) - p
    if q >= 0:
        raise Divergent(f"tail ratio exp({q:.3g}) >= 1")
    tail = float(icpt + slope * cap) - p * cap + q - math.log1p(-math.exp(q))
    share = logsumexp(cell, axis=2) - logsumexp(total)
    return tail + share


def _log_perron(logM):
    finite = np.isfinite(logM)
    if not finite.any():
        return -math.inf
    shift = float(logM[finite].max())
    M = np.exp(logM - shift)
    if not np.isfinite(M).all():
        raise Divergent("matrix entries overflow")
    rho = float(np.max(np.abs(np.linalg.eigvals(M))))
    return shift + math.log(rho) if rho > 0 else -math.inf


def induced_pressure(system: InducedSystem, t, p, *, tail=False):
    """``(lo, hi)`` bracket on ``𝒫(t, p)`` from inf and sup derivative weights.

    With ``tail=True`` both matrices also carry a geometric extrapolation of
    the branches beyond ``depth_cap``.
    """
    if not system.branches:
        raise ComputationError("induced system has no branches")
    try:
        hi = _log_perron(_log_matrix(system, t, p, "hi", tail))
        lo = _log_perron(_log_matrix(system, t, p, "lo", tail))
    except Divergent:
        return math.inf, math.inf
    return min(lo, hi), hi


def solve_p(system: InducedSystem, t, tol=1e-6, *, lo=-60.0, hi=60.0, tail=False):
    """Zero in ``p`` of the upper induced-pressure bracket, by bisection."""

    def g(p):
        return induced_pressure(system, t, p, tail=tail)[1]

    glo, ghi = g(lo), g(hi)
    if not (glo > 0 > ghi):
        raise NoSignChange(f"𝒫({t}, p) does not change sign on [{lo}, {hi}] ({glo}, {ghi})")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if not (ghi <= gm <= glo):
            raise ComputationError(f"𝒫({t}, p) is not monotone in p near {mid}")
        if gm > 0:
            lo, glo = mid, gm
        else:
            hi, ghi = mid, gm
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# equilibrium projection


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    mass: np.ndarray

    def cdf(self, x):
        """Piecewise-linear CDF at ``x``."""
        c = np.concatenate([[0.0], np.cumsum(self.mass)])
        return np.interp(x, self.edges, c)

    def to_dict(self):
        return {"edges": self.edges.tolist(), "mass": self.mass.tolist()}


def _uniform_cdf(x, lo, hi, w):
    """``sum_i w_i * clip((x - lo_i) / (hi_i - lo_i), 0, 1)`` for every ``x`` by sorted prefix sums."""
    length = np.maximum(hi - lo, 1e-300)
    slope = w / length

    def ramp(starts):
        order = np.argsort(starts, kind="stable")
        st = starts[order]
        s1 = np.concatenate([[0.0], np.cumsum(slope[order])])
        s2 = np.concatenate([[0.0], np.cumsum(slope[order] * st)])
        k = np.searchsorted(st, x, side="right")
        return x * s1[k] - s2[k]

    return ramp(lo) - ramp(hi)


def equilibrium_projection(system: InducedSystem, t, p, bins=200, *, domain=None):
    """Push the Gibbs surrogate of the induced map down to ``K`` as a histogram.

    Branch weights are ``|φ_W'|^t e^{-p m_W}`` (sup bound) scaled by the left
    and right Perron vectors of the grouped matrix; the mass of each branch
    is laid uniformly on every interval ``f^n(W)``, ``n < m_W``.
    """
    a = system.arrays()
    k = len(system.singular)
    logM = _log_matrix(system, t, p, "hi", False)
    M = np.exp(logM - np.max(logM[np.isfinite(logM)]))
    vals, right = np.linalg.eig(M)
    lead = int(np.argmax(np.abs(vals)))
    r = np.abs(np.real(right[:, lead]))
    vals_l, left = np.linalg.eig(M.T)
    lead_l = int(np.argmax(np.abs(vals_l)))
    h = np.abs(np.real(left[:, lead_l]))
    lw = t * (a["log_sup"] if t >= 0 else a["log_inf"]) - p * a["m"]
    w = np.exp(lw - lw.max()) * r[a["src"]] * h[a["tgt"]]
    o_idx, o_lo, o_hi = system.orbits()
    if o_idx.size == 0:
        raise ComputationError("induced system carries no forward images")
    if domain is None:
        domain = Interval(float(o_lo.min()), float(o_hi.max()))
    edges = np.linspace(domain.lo, domain.hi, bins + 1)
    cum = _uniform_cdf(edges, o_lo, o_hi, w[o_idx])
    mass = np.diff(cum)
    total = mass.sum()
    if not total > 0:
        raise ComputationError("projected measure has no mass")
    return Histogram(edges, mass / total)
