"""Numerical verdicts for the equivalent non-uniform hyperbolicity conditions.

Every rate is a log-rate: positive means exponential growth (or shrinking)
was observed.  Fitted rates carry a 95% interval from the slope fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import stats

from .errors import ComputationError, OrbitHitsCritical
from .map_core import Interval, MultimodalMap, Repeller
from .orbit_engine import periodic_points, preimage_tree, pull_back_components, rule_II_check
from .pressure import pressure_curve, safe_base_points

RULE_II_BOUND = 5.0
# floor for the negative-pressure margin when a sample has no error bracket
NEGATIVE_PRESSURE_TOL = 1e-6


@dataclass(frozen=True)
class RateEstimate:
    value: float
    ci_low: float
    ci_high: float
    low_confidence: bool = False
    note: str = ""

    def to_dict(self):
        return asdict(self)


def _fit_rate(ns, values):
    """Slope of ``values`` against ``ns`` with a 95% interval."""
    ns = np.asarray(ns, dtype=float)
    values = np.asarray(values, dtype=float)
    if ns.size == 1:
        v = float(values[0] / ns[0])
        return RateEstimate(v, v, v, low_confidence=True, note="single-step rate")
    if ns.size == 2:
        s = float((values[1] - values[0]) / (ns[1] - ns[0]))
        return RateEstimate(s, s, s, low_confidence=True, note="two-point fit")
    fit = stats.linregress(ns, values)
    half = float(stats.t.ppf(0.975, ns.size - 2) * fit.stderr)
    return RateEstimate(float(fit.slope), float(fit.slope) - half, float(fit.slope) + half)


# ---------------------------------------------------------------------------
# individual checks


@dataclass(frozen=True)
class UhpResult:
    log_lambda_per: float
    indifferent: tuple
    orbit_count: int
    vacuous: bool

    def to_dict(self):
        return {
            "log_lambda_per": self.log_lambda_per,
            "indifferent": [list(p) for p in self.indifferent],
            "orbit_count": self.orbit_count,
            "vacuous": self.vacuous,
        }


def check_uhp(fmap: MultimodalMap, repeller: Repeller, n_max, *, orbits_by_period=None):
    """Smallest Lyapunov exponent over repelling periodic orbits of period ``<= n_max``."""
    chis, indiff, count = [], [], 0
    for n in range(1, n_max + 1):
        orbits = periodic_points(fmap, repeller, n) if orbits_by_period is None else orbits_by_period[n]
        for o in orbits:
            if o.period != n:
                continue
            count += 1
            if o.kind == "hyperbolic_repelling":
                chis.append(o.chi)
            elif o.kind == "indifferent":
                indiff.append(o.points)
    if not chis:
        return UhpResult(math.inf, tuple(indiff), count, True)
    return UhpResult(min(chis), tuple(indiff), count, False)


def _sample_points(repeller: Repeller, samples, seed):
    pool = repeller.k_sample()
    rng = np.random.default_rng(seed)
    pick = rng.choice(pool.size, size=min(samples, pool.size), replace=False)
    return np.sort(pool[pick])


def check_expshrink(fmap: MultimodalMap, repeller: Repeller, r, n_max, samples=20, *, seed=0, points=None):
    """Exponential shrinking rate of pull-backs of ``B(x, r)``.

    For each sample the largest pull-back diameter ``D_n`` is recorded; the
    rate is the slope of ``-log D_n`` over ``n`` in ``[n_max/2, n_max]``,
    minimized over samples.
    """
    xs = _sample_points(repeller, samples, seed) if points is None else np.asarray(points)
    lo_n = max(1, n_max // 2)
    worst = None
    for x in xs:
        T = Interval(x - r, x + r)
        ns, vals = [], []
        for n in range(lo_n, n_max + 1):
            comps = pull_back_components(fmap, repeller, T, n)
            diam = max((pb.interval.length for pb in comps if pb.meets_K), default=0.0)
            if diam <= 0:
                continue
            ns.append(n)
            vals.append(-math.log(diam))
        if not ns:
            continue
        est = _fit_rate(ns, vals) if len(ns) > 1 or n_max > 1 else _fit_rate([1], [vals[0]])
        if n_max == 1:
            est = RateEstimate(est.value, est.ci_low, est.ci_high, True, "single-step rate")
        if worst is None or est.value < worst.value:
            worst = est
    if worst is None:
        raise ComputationError("no pull-backs met K")
    return worst


def check_ce2star(fmap: MultimodalMap, repeller: Repeller, z0, n_max, *, R=None):
    """Growth rate of ``min |(f^n)'(w)|`` over ``w`` in ``f^{-n}(z0)``.

    Preimages through a critical point have zero derivative and are left
    out.  When ``R`` is given and ``K`` is not invariant, a preimage counts
    only if its pull-back of ``B(z0, R)`` meets ``K``, checked through the
    component list of :func:`pull_back_components`.
    """
    tree = preimage_tree(fmap, repeller, z0, n_max)
    lo_n = max(1, n_max // 2)
    ns, vals = [], []
    for n in range(lo_n, n_max + 1):
        L = tree.log_deriv[n]
        keep = np.isfinite(L)
        if R is not None and not repeller.invariant:
            comps = [pb.interval for pb in pull_back_components(fmap, repeller, Interval(z0 - R, z0 + R), n) if pb.meets_K]
            pts = tree.points[n]
            hit = np.zeros(pts.size, dtype=bool)
            for iv in comps:
                hit |= (pts >= iv.lo) & (pts <= iv.hi)
            keep &= hit
        if not keep.any():
            continue
        ns.append(n)
        vals.append(float(L[keep].min()))
    if not ns:
        raise ComputationError("every preimage branch passes through a critical point")
    if len(ns) == 1:
        return _fit_rate([ns[0]], [vals[0]])
    return _fit_rate(ns, vals)


@dataclass(frozen=True)
class NegativePressure:
    t: float | None
    range_insufficient: bool

    def to_dict(self):
        return asdict(self)


def check_negative_pressure(curve, column="p_tree", tol=NEGATIVE_PRESSURE_TOL):
    """Smallest sampled ``t`` with ``P(t) < 0``.

    A sample counts when it is below ``-tol`` and, if it carries an error
    bracket, below minus the bracket width as well.  Near a zero of ``P`` the
    extrapolated value keeps a residue of the size of that spread.
    """
    for s in sorted(curve, key=lambda s: s.t):
        v = s.value(column)
        if v is None:
            continue
        margin = tol
        if s.error_bracket is not None:
            margin = max(tol, s.error_bracket[1] - s.error_bracket[0])
        if v < -margin:
            return NegativePressure(s.t, False)
    return NegativePressure(None, True)


# ---------------------------------------------------------------------------
# aggregate report


DEFAULTS = {
    "n_uhp": 10,
    "r_exp": 0.05,
    "n_exp": 10,
    "samples": 20,
    "n_ce2": 12,
    "z0": None,
    "t_grid": (0.0, 0.5, 1.0, 1.5, 2.0),
    "depth": 12,
    "rule_II_n": 2000,
    "rule_II_samples": 20,
    "seed": 0,
}


@dataclass
class TceReport:
    lambda_per: float
    lambda_exp: float
    lambda_ce2: float
    negative_pressure_t: float | None
    consistent: bool
    parameters: dict
    fit_intervals: dict = field(default_factory=dict)
    indifferent_orbits: list = field(default_factory=list)
    margins: dict = field(default_factory=dict)
    rule_II: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def consistency(rates, indifferent):
    """True when all rates are positive or all are not, and no indifferent orbit was seen."""
    if indifferent:
        return False
    signs = [r > 0 for r in rates]
    return all(signs) or not any(signs)


def tce_report(fmap: MultimodalMap, repeller: Repeller, config=None, *, curve=None):
    cfg = dict(DEFAULTS)
    cfg.update({k: v for k, v in (config or {}).items() if v is not None})
    uhp = check_uhp(fmap, repeller, cfg["n_uhp"])
    exp = check_expshrink(fmap, repeller, cfg["r_exp"], cfg["n_exp"], cfg["samples"], seed=cfg["seed"])
    z0 = cfg["z0"] if cfg["z0"] is not None else safe_base_points(fmap, repeller, count=1)[0]
    ce2 = check_ce2star(fmap, repeller, z0, cfg["n_ce2"])
    if curve is None:
        curve = pressure_curve(fmap, repeller, cfg["t_grid"], methods=("tree",), depth=cfg["depth"])
    neg = check_negative_pressure(curve)
    rates = [uhp.log_lambda_per, exp.value, ce2.value]
    # negative pressure enters as +1 when found and -1 otherwise
    neg_rate = 1.0 if neg.t is not None else -1.0
    consistent = consistency(rates + [neg_rate], uhp.indifferent)
    rule = _rule_II_census(fmap, repeller, cfg["rule_II_n"], cfg["rule_II_samples"], cfg["seed"])
    cfg_out = dict(cfg)
    cfg_out["z0"] = z0
    cfg_out["t_grid"] = list(cfg["t_grid"])
    return TceReport(
        lambda_per=uhp.log_lambda_per,
        lambda_exp=exp.value,
        lambda_ce2=ce2.value,
        negative_pressure_t=neg.t,
        consistent=consistent,
        parameters=cfg_out,
        fit_intervals={"lambda_exp": [exp.ci_low, exp.ci_high], "lambda_ce2": [ce2.ci_low, ce2.ci_high]},
        indifferent_orbits=[list(p) for p in uhp.indifferent],
        margins={"lambda_per": uhp.log_lambda_per, "lambda_exp": exp.value, "lambda_ce2": ce2.value, "negative_pressure": neg_rate},
        rule_II=rule,
    )


def _rule_II_census(fmap, repeller, n, samples, seed):
    xs = _sample_points(repeller, samples, seed + 1)
    values, hits = [], 0
    for x in xs:
        try:
            values.append(rule_II_check(fmap, repeller, float(x), n))
        except OrbitHitsCritical:
            hits += 1
    vmax = max(values) if values else None
    return {
        "n": n,
        "samples": len(xs),
        "max": vmax,
        "hits_critical": hits,
        "bounded": vmax is not None and vmax <= RULE_II_BOUND and hits == 0,
    }
