"""Pressure estimators for the potential ``-t log|f'|``.

Four routes to the same number:

* tree sums over backward orbits of a base point,
* sums over periodic points of period ``n``,
* Perron roots of sup/inf weighted Markov matrices on a hyperbolic
  sub-repeller (a two-sided bracket),
* the zero in ``p`` of the induced pressure (see :mod:`.inducing`).

Finite-depth values ``P_n`` carry an error term of order ``1/n``; the
reported estimate is the Richardson combination ``2 P_n - P_{n/2}`` and the
raw values are kept in the error bracket.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import sparse
from scipy.interpolate import PchipInterpolator

from .errors import (
    ComputationError,
    DivergentNegativeT,
    GridTooCoarse,
    NoZeroInRange,
)
from .map_core import MultimodalMap, Repeller, singular_set
from .orbit_engine import admissible_cylinders, periodic_points, preimage_tree
from .symbolic import TransitionMatrix, spectral_radius

log = logging.getLogger(__name__)

CSV_COLUMNS = ("t", "p_tree", "p_per", "p_markov_lo", "p_markov_hi", "p_induced", "chi_inf", "chi_sup", "depth")
PHASE_NOISE_FLOOR = 0.15
PHASE_FIT_POINTS = 3


# ---------------------------------------------------------------------------
# weighted sums


def log_weighted_sum(log_derivs, t, counts=None, *, strict=False):
    """``log sum c_i |D_i|^{-t}`` given ``log|D_i|``, with compensated summation.

    Entries with ``D_i = 0`` are dropped.  Their weight is zero for ``t < 0``;
    for ``t > 0`` it would be infinite, which is logged (or raised as
    :class:`DivergentNegativeT` when ``strict``).
    """
    L = np.asarray(log_derivs, dtype=float)
    c = np.ones(L.shape) if counts is None else np.asarray(counts, dtype=float)
    finite = np.isfinite(L)
    if not finite.all() and t > 0:
        msg = f"{int((~finite).sum())} zero-derivative branches dropped at t={t}"
        if strict:
            raise DivergentNegativeT(msg)
        log.warning(msg)
    L, c = L[finite], c[finite]
    if L.size == 0:
        return -math.inf
    e = -t * L
    m = float(e.max())
    return m + math.log(math.fsum((c * np.exp(e - m)).tolist()))


def richardson(p_n, p_half):
    return 2.0 * p_n - p_half


# ---------------------------------------------------------------------------
# tree and periodic pressure


def tree_pressure(fmap: MultimodalMap, repeller: Repeller, z, t, n, *, strict=False, tree=None):
    """Depth-``n`` tree pressure ``(1/n) log sum |(f^n)'(x)|^{-t}`` over ``f^{-n}(z)`` in ``K``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    tree = preimage_tree(fmap, repeller, z, n) if tree is None else tree
    return log_weighted_sum(tree.log_deriv[n], t, strict=strict) / n


def tree_pressure_bracket(fmap, repeller, z, t, n, *, tree=None):
    """``(estimate, (lo, hi))`` with the (n, n/2) Richardson estimate and the raw value."""
    tree = preimage_tree(fmap, repeller, z, n) if tree is None else tree
    pn = tree_pressure(fmap, repeller, z, t, n, tree=tree)
    ph = tree_pressure(fmap, repeller, z, t, n // 2, tree=tree) if n >= 2 else pn
    est = richardson(pn, ph)
    return est, (min(pn, est), max(pn, est))


def _fixed_point_census(orbits, n):
    logs, counts = [], []
    for o in orbits:
        if n % o.period == 0:
            logs.append(o.chi * n)
            counts.append(o.period)
    return np.asarray(logs), np.asarray(counts, dtype=float)


def periodic_pressure(fmap: MultimodalMap, repeller: Repeller, t, n, *, orbits=None):
    """``(1/n) log sum |(f^n)'(p)|^{-t}`` over the fixed points of ``f^n`` in ``K``."""
    orbits = periodic_points(fmap, repeller, n) if orbits is None else orbits
    logs, counts = _fixed_point_census(orbits, n)
    return log_weighted_sum(logs, t, counts) / n


def periodic_pressure_bracket(fmap, repeller, t, n, *, orbits=None):
    orbits = periodic_points(fmap, repeller, n) if orbits is None else orbits
    pn = periodic_pressure(fmap, repeller, t, n, orbits=orbits)
    ph = periodic_pressure(fmap, repeller, t, n // 2, orbits=orbits) if n >= 2 else pn
    est = richardson(pn, ph)
    return est, (min(pn, est), max(pn, est))


# ---------------------------------------------------------------------------
# base points


def _forward_critical_orbit(fmap, repeller, steps=24):
    pts = []
    for c in fmap.critical_locations:
        y = float(c)
        for _ in range(steps):
            y = float(fmap(y))
            pts.append(y)
            if not repeller.in_effective(y):
                break
    return pts


def safe_base_points(fmap: MultimodalMap, repeller: Repeller, count=5, max_period=4):
    """Periodic points of low period whose orbits stay away from singular points.

    The candidates are ranked by the distance of their whole orbit to the
    critical points, the component endpoints, the non-open points and the
    forward critical orbits, so the first ``count`` are the most hyperbolic
    choices available.
    """
    bad = set(singular_set(fmap, repeller).all)
    for iv in repeller.effective:
        bad.update((iv.lo, iv.hi))
    bad.update(_forward_critical_orbit(fmap, repeller))
    bad = np.asarray(sorted(bad))
    cands = []
    for n in range(1, max_period + 1):
        for o in periodic_points(fmap, repeller, n):
            if o.period != n or o.kind != "hyperbolic_repelling":
                continue
            pts = np.asarray(o.points)
            d = float(np.min(np.abs(pts[:, None] - bad[None, :]))) if bad.size else 1.0
            for p in o.points:
                own = float(np.min(np.abs(p - bad))) if bad.size else 1.0
                cands.append((-round(d, 12), -round(own, 12), n, p))
    cands.sort()
    out = []
    for _, _, _, p in cands:
        if all(abs(p - q) > 1e-9 for q in out):
            out.append(p)
        if len(out) == count:
            break
    return out


# ---------------------------------------------------------------------------
# Markov brackets


def markov_pressure(matrix, weights, t=None):
    """``log`` of the Perron root of ``matrix ∘ weights`` (weights already raised to ``-t``)."""
    A = matrix.entries if isinstance(matrix, TransitionMatrix) else matrix
    if sparse.issparse(A):
        W = sparse.csr_matrix(A.multiply(weights))
    else:
        W = np.asarray(A, dtype=float) * np.asarray(weights, dtype=float)
    rho = spectral_radius(W)
    return math.log(rho) if rho > 0 else -math.inf


@dataclass
class MarkovRefinement:
    """Depth-``k`` cylinder chain of a hyperbolic sub-repeller.

    States are admissible words of length ``k`` whose cylinders stay off the
    critical points; ``log_dmin``/``log_dmax`` bound ``log|f'|`` on each
    cylinder.
    """

    depth: int
    lo: np.ndarray
    hi: np.ndarray
    adjacency: sparse.csr_matrix
    log_dmin: np.ndarray
    log_dmax: np.ndarray

    @property
    def size(self):
        return self.lo.size


def _critical_free(fmap, lo, hi):
    keep = np.ones(lo.size, dtype=bool)
    for c in fmap.critical_locations:
        keep &= ~((lo <= c) & (hi >= c))
    return keep


def markov_refinement(fmap: MultimodalMap, repeller: Repeller, depth, *, base_depth=None):
    """Cylinders of length ``depth`` of the sub-repeller fixed at ``base_depth``.

    The sub-repeller is the subshift of words whose every window of length
    ``base_depth`` (default ``depth``) names a cylinder free of critical
    points.  Raising ``depth`` with ``base_depth`` held fixed refines the
    partition of one and the same repeller.
    """
    base_depth = depth if base_depth is None else base_depth
    if not 1 <= base_depth <= depth:
        raise ValueError("need 1 <= base_depth <= depth")
    lo, hi, words = admissible_cylinders(fmap, repeller.branches, depth)
    base = max(len(repeller.branches), 2)
    if base_depth == depth:
        keep = _critical_free(fmap, lo, hi)
    else:
        blo, bhi, bwords = admissible_cylinders(fmap, repeller.branches, base_depth)
        bpow = base ** np.arange(base_depth - 1, -1, -1, dtype=np.int64)
        allowed = np.sort(bwords[_critical_free(fmap, blo, bhi)].astype(np.int64) @ bpow)
        keep = np.ones(lo.size, dtype=bool)
        for j in range(depth - base_depth + 1):
            window = words[:, j : j + base_depth].astype(np.int64) @ bpow
            pos = np.clip(np.searchsorted(allowed, window), 0, max(allowed.size - 1, 0))
            keep &= allowed.size > 0 and (allowed[pos] == window)
    lo, hi, words = lo[keep], hi[keep], words[keep]
    powers = base ** np.arange(depth - 1, -1, -1, dtype=np.int64)
    codes = words.astype(np.int64) @ powers
    index = {c: i for i, c in enumerate(codes.tolist())}
    tail = codes % (base ** (depth - 1)) * base
    rows, cols = [], []
    for s in range(base):
        nxt = tail + s
        for i, c in enumerate(nxt.tolist()):
            j = index.get(c)
            if j is not None:
                rows.append(i)
                cols.append(j)
    # only keep transitions that are geometrically realised
    rows = np.asarray(rows, dtype=int)
    cols = np.asarray(cols, dtype=int)
    if rows.size:
        img_a = fmap(lo[rows])
        img_b = fmap(hi[rows])
        ilo, ihi = np.minimum(img_a, img_b), np.maximum(img_a, img_b)
        ok = (ilo <= lo[cols] + 1e-12) & (ihi >= hi[cols] - 1e-12)
        rows, cols = rows[ok], cols[ok]
    adj = sparse.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(lo.size, lo.size))
    # |f'| extremes on each cylinder: endpoints plus interior zeros of f''
    d2roots = np.roots(fmap._d2[::-1]) if fmap._d2.size > 1 else np.array([])
    d2roots = np.array([r.real for r in np.atleast_1d(d2roots) if abs(r.imag) < 1e-12])
    da, db = np.abs(fmap.d1(lo)), np.abs(fmap.d1(hi))
    dmin, dmax = np.minimum(da, db), np.maximum(da, db)
    for r in d2roots:
        inside = (lo < r) & (hi > r)
        v = abs(float(fmap.d1(r)))
        dmin = np.where(inside, np.minimum(dmin, v), dmin)
        dmax = np.where(inside, np.maximum(dmax, v), dmax)
    with np.errstate(divide="ignore"):
        return MarkovRefinement(depth, lo, hi, adj, np.log(dmin), np.log(dmax))


def markov_bracket(fmap: MultimodalMap, repeller: Repeller, t, depth, *, refinement=None, base_depth=None):
    """``(lo, hi)`` bracket on the pressure of the hyperbolic sub-repeller fixed at ``base_depth``."""
    ref = markov_refinement(fmap, repeller, depth, base_depth=base_depth) if refinement is None else refinement
    if ref.size == 0:
        return -math.inf, -math.inf
    w_sup = np.exp(-t * (ref.log_dmin if t >= 0 else ref.log_dmax))
    w_inf = np.exp(-t * (ref.log_dmax if t >= 0 else ref.log_dmin))
    adj = ref.adjacency
    hi = markov_pressure(adj, _row_scale(adj, w_sup))
    lo = markov_pressure(adj, _row_scale(adj, w_inf))
    return lo, hi


def _row_scale(adj, w):
    """Weight matrix with entry ``w[i]`` on every transition leaving state ``i``."""
    out = adj.copy().tocsr()
    out.data = np.repeat(w, np.diff(out.indptr)).astype(float)
    return out


# ---------------------------------------------------------------------------
# Lyapunov bounds


@dataclass(frozen=True)
class ChiBounds:
    chi_inf: float
    chi_sup: float
    method_tags: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 <= self.chi_inf <= self.chi_sup):
            raise ValueError(f"need 0 <= chi_inf <= chi_sup, got {self.chi_inf}, {self.chi_sup}")

    @classmethod
    def from_orbits(cls, orbits):
        chis = [o.chi for o in orbits if math.isfinite(o.chi)]
        if not chis:
            raise ValueError("no orbits with finite exponent")
        return cls(max(min(chis), 0.0), max(chis), {"chi_inf": "periodic", "chi_sup": "periodic"})

    def to_dict(self):
        return asdict(self)


def chi_bounds(fmap: MultimodalMap, repeller: Repeller, n, *, z=None, grid=4001, orbits=None):
    """Lower and upper Lyapunov bounds over ``K`` from three censuses.

    ``chi_sup`` is the larger of the periodic maximum and the grid maximum of
    ``(1/n) log|(f^n)'|`` over grid points whose first ``n`` iterates stay in
    the effective set; ``chi_inf`` is the smaller of the periodic minimum and
    the backward-tree minimum rate from the base point ``z``.
    """
    orbits = periodic_points(fmap, repeller, n) if orbits is None else orbits
    per = [o.chi for o in orbits if math.isfinite(o.chi) and o.chi > -math.inf]
    per_inf, per_sup = (min(per), max(per)) if per else (math.inf, -math.inf)
    xs = np.concatenate([np.linspace(iv.lo, iv.hi, grid) for iv in repeller.effective])
    acc = np.zeros_like(xs)
    alive = np.ones(xs.shape, dtype=bool)
    y = xs.copy()
    with np.errstate(divide="ignore"):
        for _ in range(n):
            acc += np.log(np.abs(fmap.d1(y)))
            y = fmap(y)
            alive &= repeller.in_effective(y)
    grid_sup = float(np.max(acc[alive])) / n if alive.any() else -math.inf
    if z is None:
        z = safe_base_points(fmap, repeller, count=1)[0]
    tree_inf = _backward_min_rate(preimage_tree(fmap, repeller, z, n))
    chi_sup = max(per_sup, grid_sup)
    chi_inf = max(min(per_inf, tree_inf), 0.0)
    tags = {
        "chi_inf": "periodic" if per_inf <= tree_inf else "backward-min",
        "chi_sup": "periodic" if per_sup >= grid_sup else "sup-derivative",
    }
    return ChiBounds(chi_inf, chi_sup, tags)


def _backward_min_rate(tree):
    """Growth of ``min log|(f^k)'|`` over the tree between depths ``n/2`` and ``n``.

    The increment drops the constant offset that preimages close to a
    critical point add to every level, which biases ``min/n`` low.
    """
    n = tree.depth

    def level_min(k):
        L = tree.log_deriv[k]
        L = L[np.isfinite(L)]
        return float(L.min()) if L.size else math.nan

    if n < 2:
        v = level_min(n) / n if n else math.nan
        return v if math.isfinite(v) else math.inf
    h = n // 2
    rate = (level_min(n) - level_min(h)) / (n - h)
    return rate if math.isfinite(rate) else math.inf


# ---------------------------------------------------------------------------
# curves


@dataclass
class PressureSample:
    t: float
    p_tree: float | None = None
    p_per: float | None = None
    p_markov: tuple | None = None
    p_induced: float | None = None
    depth_used: int = 0
    error_bracket: tuple | None = None
    p_tree_raw: float | None = None
    p_per_raw: float | None = None
    z_spread: float | None = None
    errors: list = field(default_factory=list)

    def value(self, column):
        if column == "p_markov_lo":
            return None if self.p_markov is None else self.p_markov[0]
        if column == "p_markov_hi":
            return None if self.p_markov is None else self.p_markov[1]
        return getattr(self, column)

    def to_dict(self):
        d = asdict(self)
        d["p_markov"] = list(self.p_markov) if self.p_markov is not None else None
        d["error_bracket"] = list(self.error_bracket) if self.error_bracket is not None else None
        return d


def pressure_curve(
    fmap: MultimodalMap,
    repeller: Repeller,
    t_grid,
    methods=("tree", "periodic"),
    depth=12,
    *,
    z_points=None,
    markov_depth=6,
    induced_system=None,
):
    """Sample ``P(t)`` on ``t_grid`` with every requested method.

    Per-sample failures are recorded in ``PressureSample.errors`` and never
    abort the grid.
    """
    methods = tuple(methods)
    samples = [PressureSample(float(t), depth_used=depth) for t in t_grid]
    if not methods:
        return samples
    trees = []
    if "tree" in methods:
        zs = safe_base_points(fmap, repeller) if z_points is None else list(z_points)
        trees = [preimage_tree(fmap, repeller, z, depth) for z in zs]
    orbits = periodic_points(fmap, repeller, depth) if "periodic" in methods else None
    ref = None
    if "markov" in methods:
        try:
            ref = markov_refinement(fmap, repeller, markov_depth)
        except ComputationError as exc:
            for s in samples:
                s.errors.append(f"markov: {exc}")
    for s in samples:
        t = s.t
        lows, highs = [], []
        if trees:
            try:
                ests, raws = [], []
                for tr in trees:
                    pn = log_weighted_sum(tr.log_deriv[depth], t) / depth
                    ph = log_weighted_sum(tr.log_deriv[depth // 2], t) / (depth // 2)
                    raws.append(pn)
                    ests.append(richardson(pn, ph))
                s.p_tree = float(np.median(ests))
                s.p_tree_raw = float(np.median(raws))
                s.z_spread = float(max(ests) - min(ests))
                lows += [s.p_tree, s.p_tree_raw]
                highs += [s.p_tree, s.p_tree_raw]
            except ComputationError as exc:
                s.errors.append(f"tree: {exc}")
        if orbits is not None:
            est, (lo, hi) = periodic_pressure_bracket(fmap, repeller, t, depth, orbits=orbits)
            s.p_per = est
            s.p_per_raw = periodic_pressure(fmap, repeller, t, depth, orbits=orbits)
            lows.append(lo)
            highs.append(hi)
        if ref is not None:
            try:
                s.p_markov = markov_bracket(fmap, repeller, t, markov_depth, refinement=ref)
            except ComputationError as exc:
                s.errors.append(f"markov: {exc}")
        if "induced" in methods and induced_system is not None:
            from .inducing import solve_p

            try:
                s.p_induced = solve_p(induced_system, t)
            except ComputationError as exc:
                s.errors.append(f"induced: {exc}")
        if lows:
            s.error_bracket = (min(lows), max(highs))
    return samples


def _column(curve, column):
    ts, ps = [], []
    for s in curve:
        v = s.value(column)
        if v is not None and math.isfinite(v):
            ts.append(s.t)
            ps.append(v)
    return np.asarray(ts), np.asarray(ps)


def default_column(curve):
    for col in ("p_per", "p_tree", "p_induced"):
        if any(s.value(col) is not None for s in curve):
            return col
    raise ValueError("curve has no pressure values")


def phase_points(curve, chi: ChiBounds, column=None, noise_floor=PHASE_NOISE_FLOOR, fit_points=PHASE_FIT_POINTS):
    """Condensation and freezing points ``(t_minus, t_plus)`` from a sampled curve.

    ``g(t) = P(t) + t*chi_sup`` is zero below ``t_minus`` and linear past it.
    Finite-depth estimates round the corner, so the first grid point where
    ``g`` exceeds ``noise_floor`` is located, a line is fitted to the next
    ``fit_points`` samples on the linear branch, and its zero is returned.
    ``t_plus`` is the mirror construction with ``chi_inf``.
    """
    column = default_column(curve) if column is None else column
    ts, ps = _column(curve, column)
    if ts.size < 2:
        raise GridTooCoarse("need at least two samples")

    def crossing(g, ts):
        above = g > noise_floor
        if not above.any():
            return math.inf
        if above.all():
            return -math.inf
        k = int(np.argmax(above))
        if not above[k:].all():
            raise GridTooCoarse(f"sign pattern of P(t)+t*chi is not monotone near t={ts[k]}")
        sel = slice(k + 1, k + 1 + fit_points)
        if ts[sel].size < 2:
            sel = slice(max(k - 1, 0), k + 1) if ts.size - k < 2 else slice(k, k + 2)
        slope, intercept = np.polyfit(ts[sel], g[sel], 1)
        if slope <= 0:
            raise GridTooCoarse(f"non-increasing branch after t={ts[k]}")
        root = -intercept / slope
        return float(min(max(root, ts[0]), ts[k]))

    t_minus = crossing(ps + ts * chi.chi_sup, ts)
    # mirror: t -> -t turns the freezing point into a condensation point
    t_plus = -crossing((ps + ts * chi.chi_inf)[::-1], -ts[::-1])
    return t_minus, t_plus


def bowen_root(curve, column=None, tol=1e-4):
    """First zero of the shape-preserving interpolant of ``t -> P(t)``."""
    column = default_column(curve) if column is None else column
    ts, ps = _column(curve, column)
    if ts.size < 2:
        raise NoZeroInRange("need at least two samples")
    interp = PchipInterpolator(ts, ps)
    for a, b, pa, pb in zip(ts, ts[1:], ps, ps[1:]):
        if pa == 0.0:
            return float(a)
        if pa > 0 > pb or pa < 0 < pb:
            lo, hi = a, b
            flo = pa
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                fm = float(interp(mid))
                if (fm > 0) == (flo > 0) and fm != 0:
                    lo, flo = mid, fm
                else:
                    hi = mid
            return float(0.5 * (lo + hi))
    raise NoZeroInRange(f"no sign change of {column} on [{ts[0]}, {ts[-1]}]")


def curve_to_csv(curve, chi: ChiBounds | None = None):
    """CSV text with the fixed column set; absent values are empty fields."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)

    def fmt(v):
        return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.12g}"

    for s in curve:
        lo, hi = s.p_markov if s.p_markov is not None else (None, None)
        w.writerow(
            [
                fmt(s.t),
                fmt(s.p_tree),
                fmt(s.p_per),
                fmt(lo),
                fmt(hi),
                fmt(s.p_induced),
                fmt(chi.chi_inf if chi else None),
                fmt(chi.chi_sup if chi else None),
                s.depth_used,
            ]
        )
    return buf.getvalue()
