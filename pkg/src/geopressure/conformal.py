"""Patterson–Sullivan measures on backward trees and their conformality defect."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import Divergent, IntervalNotInjective
from .map_core import Interval, MultimodalMap, Repeller, singular_set
from .orbit_engine import preimage_tree

# level masses may drift upward at finite depth; beyond this slope per level the
# series is treated as divergent
GROWTH_TOLERANCE = 0.02
ATOM_TOL = 1e-12


@dataclass
class AtomicMeasure:
    points: np.ndarray
    weights: np.ndarray
    total: float
    meta: dict = field(default_factory=dict)
    levels: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        order = np.argsort(self.points, kind="stable")
        self.points = np.asarray(self.points, dtype=float)[order]
        self.weights = np.asarray(self.weights, dtype=float)[order]
        if self.levels is not None:
            self.levels = np.asarray(self.levels)[order]
        self._cum = np.concatenate([[0.0], np.cumsum(self.weights)])

    @property
    def atoms(self):
        return list(zip(self.points.tolist(), self.weights.tolist()))

    def mass(self, iv: Interval):
        """Mass of the closed interval ``iv``."""
        i = np.searchsorted(self.points, iv.lo, side="left")
        j = np.searchsorted(self.points, iv.hi, side="right")
        return float(self._cum[j] - self._cum[i])

    def atom_mass(self, x, tol=ATOM_TOL):
        return self.mass(Interval(x - tol, x + tol))

    def cdf(self, x):
        return self._cum[np.searchsorted(self.points, np.asarray(x, dtype=float), side="right")]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("point", "weight"))
        for x, m in zip(self.points, self.weights):
            w.writerow((repr(float(x)), repr(float(m))))
        return buf.getvalue()

    def cdf_csv(self, samples=201, domain=None):
        lo, hi = (self.points[0], self.points[-1]) if domain is None else (domain.lo, domain.hi)
        xs = np.linspace(lo, hi, samples)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("x", "cdf"))
        for x, c in zip(xs, self.cdf(xs)):
            w.writerow((f"{x:.12g}", f"{c:.12g}"))
        return buf.getvalue()


def patterson_sullivan(fmap: MultimodalMap, repeller: Repeller, z0, t, lam, k_max, *, tree=None):
    """Normalized ``sum_k sum_x lam^{-k} |(f^k)'(x)|^{-t} delta_x`` over ``x`` in ``f^{-k}(z0)``.

    The slowly varying factor is taken to be 1.  The series is declared
    divergent when the per-level masses keep growing, which happens when
    ``lam`` is below ``exp P(t)``.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if k_max == 0:
        return AtomicMeasure(np.array([float(z0)]), np.array([1.0]), 1.0, _meta(t, lam, 0, z0), np.array([0]))
    tree = preimage_tree(fmap, repeller, z0, k_max) if tree is None else tree
    log_lam = math.log(lam)
    pts, logw, lev = [], [], []
    level_mass = []
    with np.errstate(divide="ignore", invalid="ignore"):
        for k in range(k_max + 1):
            L = tree.log_deriv[k]
            lw = -k * log_lam - t * L
            ok = np.isfinite(lw)
            pts.append(tree.points[k][ok])
            logw.append(lw[ok])
            lev.append(np.full(int(ok.sum()), k))
            level_mass.append(_logsumexp(lw[ok]))
    level_mass = np.asarray(level_mass)
    if not np.isfinite(level_mass).all() or level_mass.max() > 700:
        raise Divergent(f"level masses overflow for lambda={lam}, t={t}")
    tail = level_mass[k_max // 2 :]
    if tail.size >= 2:
        slope = float(np.polyfit(np.arange(tail.size), tail, 1)[0])
        if slope > GROWTH_TOLERANCE:
            raise Divergent(f"level masses grow by {slope:.3g} per level; lambda={lam} is below exp P({t})")
    logw = np.concatenate(logw)
    w = np.exp(logw - logw.max())
    total = math.fsum(w.tolist())
    m = AtomicMeasure(np.concatenate(pts), w / total, 1.0, _meta(t, lam, k_max, z0), np.concatenate(lev))
    m.meta["level_log_mass"] = level_mass.tolist()
    return m


def _logsumexp(a):
    if a.size == 0:
        return -math.inf
    m = float(a.max())
    return m + math.log(math.fsum(np.exp(a - m).tolist()))


def _meta(t, lam, k_max, z0):
    return {"t": float(t), "lambda": float(lam), "k_max": int(k_max), "z0": float(z0)}


def _check_injective(fmap, repeller, A: Interval, avoid):
    for c in fmap.critical_locations:
        if A.lo <= c <= A.hi:
            raise IntervalNotInjective(f"{A} contains the turning point {c}")
    for s in avoid:
        if A.lo <= s <= A.hi:
            raise IntervalNotInjective(f"{A} contains the singular point {s}")
    if not any(br.interval.lo <= A.lo and A.hi <= br.interval.hi for br in fmap.laps):
        raise IntervalNotInjective(f"{A} is not inside one lap")


def conformality_defect(fmap: MultimodalMap, measure: AtomicMeasure, t, lam, test_intervals, *, repeller=None):
    """Largest ``|mu(f(A)) - sum_{x in A} lam |f'(x)|^t mu(x)|`` over the test intervals."""
    avoid = singular_set(fmap, repeller).all if repeller is not None else ()
    worst = 0.0
    for A in test_intervals:
        _check_injective(fmap, repeller, A, avoid)
        ya, yb = float(fmap(A.lo)), float(fmap(A.hi))
        image = Interval(min(ya, yb), max(ya, yb))
        i = np.searchsorted(measure.points, A.lo, side="left")
        j = np.searchsorted(measure.points, A.hi, side="right")
        x = measure.points[i:j]
        pulled = math.fsum((lam * np.abs(fmap.d1(x)) ** t * measure.weights[i:j]).tolist())
        worst = max(worst, abs(measure.mass(image) - pulled))
    return worst


def lap_interior_intervals(fmap: MultimodalMap, repeller: Repeller, count=20, *, width=(0.01, 0.03), seed=0):
    """Random closed intervals inside laps, inside ``K``'s components and off ``S'``.

    Every interval keeps at least its own width away from the singular points.
    """
    rng = np.random.default_rng(seed)
    avoid = np.asarray(singular_set(fmap, repeller).all + fmap.critical_locations)
    pieces = [br.interval for br in repeller.branches]
    lengths = np.array([p.length for p in pieces])
    out = []
    while len(out) < count:
        piece = pieces[int(rng.choice(len(pieces), p=lengths / lengths.sum()))]
        w = float(rng.uniform(*width))
        if piece.length <= 3 * w:
            continue
        lo = float(rng.uniform(piece.lo + w, piece.hi - 2 * w))
        A = Interval(lo, lo + w)
        if avoid.size and np.min(np.abs(avoid - A.mid)) < 1.5 * w:
            continue
        out.append(A)
    return out


@dataclass(frozen=True)
class StarDefect:
    x: float
    image_mass: float
    atom_mass: float
    pulled_mass: float
    slack_lower: float
    slack_upper: float
    valid: bool
    note: str = ""

    def to_dict(self):
        return dict(self.__dict__)


def star_defect_at_no_points(fmap: MultimodalMap, measure: AtomicMeasure, t, lam, no_points):
    """Slack of the two one-sided conformality inequalities at each non-open point.

    ``slack_lower = mu(f(x)) - lam |f'(x)|^t mu(x)`` and
    ``slack_upper = sum_{z in f^{-1}(f(x))} lam |f'(z)|^t mu(z) - mu(f(x))``;
    both must be non-negative.  Terms of the form ``inf * 0`` are dropped,
    and an atom at a critical point with ``t < 0`` marks the point invalid.
    """
    out = []
    for x in no_points:
        fx = float(fmap(x))
        img = measure.atom_mass(fx)
        mx = measure.atom_mass(x)

        def jac_mass(z, mz):
            d = abs(float(fmap.d1(z)))
            if mz == 0.0:
                return 0.0, True
            if d == 0.0 and t < 0:
                return math.inf, False
            return lam * d**t * mz, True

        own, valid = jac_mass(x, mx)
        total = 0.0
        for pre in fmap.preimages(fx):
            v, ok = jac_mass(pre.x, measure.atom_mass(pre.x))
            total += v
            valid &= ok
        note = "" if valid else "atom at a critical point with t < 0"
        out.append(StarDefect(float(x), img, mx, total, img - own, total - img, valid, note))
    return out


def base_point_interval(fmap: MultimodalMap, repeller: Repeller, z0, width=0.02):
    """Injective interval centred on ``z0``, halved until it is off ``S'`` and inside a lap.

    Returns None when no such interval of width above 1e-6 exists.
    """
    avoid = singular_set(fmap, repeller).all
    while width > 1e-6:
        A = Interval(z0 - width / 2, z0 + width / 2)
        try:
            _check_injective(fmap, repeller, A, avoid)
            return A
        except IntervalNotInjective:
            width /= 2
    return None


def best_lambda(fmap, repeller, z0, t, pressure_estimate, k_max, test_intervals, steps=9):
    """Defect-minimizing ``lam`` on the grid ``exp(P) * (1 + 2^-j)``, ``j < steps``.

    An interval around ``z0`` is always added to the test set.  Away from the
    base atom the truncated series is conformal for any large ``lam``, so
    random intervals alone would favour the largest grid value.
    """
    base = math.exp(pressure_estimate)
    tree = preimage_tree(fmap, repeller, z0, k_max)
    around = base_point_interval(fmap, repeller, z0)
    test_intervals = list(test_intervals) + ([around] if around is not None else [])
    best = None
    for j in range(steps):
        lam = base * (1.0 + 2.0**-j)
        try:
            mu = patterson_sullivan(fmap, repeller, z0, t, lam, k_max, tree=tree)
        except Divergent:
            continue
        d = conformality_defect(fmap, mu, t, lam, test_intervals, repeller=repeller)
        if best is None or d < best[1]:
            best = (lam, d)
    return best
