"""Itineraries, Markov transition matrices, entropy and exceptional sets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import sparse

from .errors import BoundaryHit, NotMarkov
from .map_core import Interval, MultimodalMap, Repeller

MARKOV_TOL = 1e-9


# ---------------------------------------------------------------------------
# partitions and itineraries


def partition_pieces(fmap: MultimodalMap, extra_cuts=()):
    """Closed symbol intervals: the domain cut at critical points and ``extra_cuts``."""
    return tuple(br.interval for br in fmap.branches_over(fmap.domain, extra_cuts))


class Itinerary(NamedTuple):
    symbols: tuple
    truncated: bool


def symbol_of(pieces, x, tol=0.0):
    """Index of the piece containing ``x``; ``None`` on a shared boundary or outside."""
    hits = [i for i, iv in enumerate(pieces) if iv.lo - tol <= x <= iv.hi + tol]
    if len(hits) != 1:
        return None
    i = hits[0]
    iv = pieces[i]
    on_cut = (x == iv.lo and i > 0 and pieces[i - 1].hi == iv.lo) or (
        x == iv.hi and i + 1 < len(pieces) and pieces[i + 1].lo == iv.hi
    )
    return None if on_cut else i


def itinerary(fmap: MultimodalMap, x, n, extra_cuts=(), strict=False):
    """First ``n`` symbols of the orbit of ``x``.

    An orbit point sitting exactly on a cut truncates the itinerary and sets
    the ``truncated`` flag (``strict=True`` raises :class:`BoundaryHit`).
    """
    pieces = partition_pieces(fmap, extra_cuts)
    crit = set(fmap.critical_locations) | set(extra_cuts)
    out = []
    y = float(x)
    for _ in range(n):
        if y in crit:
            if strict:
                raise BoundaryHit(f"orbit of {x} hits the cut {y}")
            return Itinerary(tuple(out), True)
        s = symbol_of(pieces, y)
        if s is None:
            if strict:
                raise BoundaryHit(f"orbit of {x} leaves the partition at {y}")
            return Itinerary(tuple(out), True)
        out.append(s)
        y = float(fmap(y))
    return Itinerary(tuple(out), False)


def cylinder_interval(fmap: MultimodalMap, word, extra_cuts=()):
    """Closed interval of points whose itinerary starts with ``word`` (or ``None``)."""
    branches = fmap.branches_over(fmap.domain, extra_cuts)
    target = branches[word[-1]].interval
    for sym in reversed(word[:-1]):
        br = branches[sym]
        lo = max(target.lo, br.image.lo)
        hi = min(target.hi, br.image.hi)
        if lo > hi:
            return None
        ends = fmap.invert(br, [lo, hi])
        target = Interval(float(min(ends)), float(max(ends)))
    return target


# ---------------------------------------------------------------------------
# transition matrices


@dataclass(frozen=True)
class TransitionMatrix:
    entries: np.ndarray
    symbol_meanings: tuple
    residual: float = 0.0

    @property
    def size(self):
        return self.entries.shape[0]

    def to_dict(self):
        return {
            "size": self.size,
            "entries": self.entries.astype(int).tolist(),
            "symbols": [list(iv.as_tuple()) for iv in self.symbol_meanings],
            "markov_residual": self.residual,
        }


def _pieces_in_k(repeller: Repeller, symbol_iv: Interval):
    out = []
    for iv in repeller.effective:
        piece = iv.intersect(symbol_iv)
        if piece is not None and piece.length > 0:
            out.append(piece)
    return out


def transition_matrix(fmap: MultimodalMap, repeller: Repeller, partition=None):
    """0/1 transition matrix of ``partition`` restricted to ``K``.

    ``partition`` defaults to the domain cut at critical points.  The image of
    each symbol's ``K``-part must cover every other symbol's ``K``-part fully
    or touch it in at most an endpoint; anything else raises :class:`NotMarkov`.
    """
    pieces = tuple(partition) if partition is not None else partition_pieces(fmap)
    tol = MARKOV_TOL * fmap.scale
    k = len(pieces)
    A = np.zeros((k, k), dtype=np.int8)
    residual = 0.0
    k_parts = [_pieces_in_k(repeller, p) for p in pieces]
    for i, src in enumerate(k_parts):
        images = []
        for piece in src:
            for br in fmap.branches_over([piece]):
                images.append(br.image)
        for j, dst in enumerate(k_parts):
            if not dst:
                continue
            covered, touched = True, False
            for d in dst:
                overlap = 0.0
                for im in images:
                    ov = im.intersect(d)
                    if ov is not None:
                        overlap += ov.length
                if overlap > tol:
                    touched = True
                gap = d.length - overlap
                if gap > tol:
                    covered = False
                if touched and not covered:
                    raise NotMarkov(f"image of symbol {i} partially covers symbol {j} (gap {gap:.3e})")
                residual = max(residual, min(abs(gap), abs(overlap)) if touched else 0.0)
            A[i, j] = 1 if touched else 0
    return TransitionMatrix(A, pieces, residual)


# ---------------------------------------------------------------------------
# spectral quantities


def spectral_radius(M, tol=1e-12, max_iter=200000):
    """Perron root of a nonnegative matrix by shifted power iteration.

    The shift ``sigma * I`` keeps periodic matrices from oscillating.  The
    stopping rule uses Collatz–Wielandt bounds where the iterate is positive
    and the change of the norm ratio otherwise.
    """
    if sparse.issparse(M):
        M = M.tocsr().astype(float)
        if M.shape[0] == 0:
            return 0.0
        if np.any(M.data < 0):
            raise ValueError("matrix must be nonnegative")
    else:
        M = np.asarray(M, dtype=float)
        if M.size == 0:
            return 0.0
        if np.any(M < 0):
            raise ValueError("matrix must be nonnegative")
    n = M.shape[0]
    sigma = float(M.sum() / n)
    if not np.isfinite(sigma):
        return math.inf
    if sigma == 0.0:
        return 0.0
    x = np.full(n, 1.0 / n)
    prev = None
    for _ in range(max_iter):
        y = M @ x + sigma * x
        norm = y.sum()
        if not np.isfinite(norm) or norm == 0.0:
            return 0.0 if norm == 0.0 else math.inf
        if np.all(x > 0):
            ratios = y / x
            lo, hi = ratios.min(), ratios.max()
            if hi - lo <= tol * max(lo - sigma, 1e-300):
                return max(0.5 * (lo + hi) - sigma, 0.0)
        est = norm / x.sum()
        if prev is not None and abs(est - prev) <= tol * est * 1e-2:
            return max(est - sigma, 0.0)
        prev = est
        x = y / norm
    return max(prev - sigma, 0.0)


def spectral_entropy(matrix):
    A = matrix.entries if isinstance(matrix, TransitionMatrix) else np.asarray(matrix)
    rho = spectral_radius(A)
    return math.log(rho) if rho > 0 else -math.inf


def transitivity_flags(matrix):
    A = matrix.entries if isinstance(matrix, TransitionMatrix) else np.asarray(matrix)
    B = np.asarray(A) != 0
    n = B.shape[0]
    reach = B.copy()
    for k in range(n):
        reach |= np.outer(reach[:, k], reach[k, :])
    irreducible = bool(reach.all())
    primitive = False
    if irreducible:
        # Wielandt: a primitive n×n matrix has A^((n-1)^2+1) > 0.
        power = (n - 1) ** 2 + 1
        P = np.eye(n, dtype=bool)
        base = B.copy()
        while power:
            if power & 1:
                P = (P.astype(np.int64) @ base.astype(np.int64)) > 0
            base = (base.astype(np.int64) @ base.astype(np.int64)) > 0
            power >>= 1
        primitive = bool(P.all())
    return {"irreducible": irreducible, "primitive": primitive}


def count_admissible_words(matrix, n, end_symbol=None):
    """Number of admissible words of length ``n`` (optionally ending in ``end_symbol``)."""
    A = (matrix.entries if isinstance(matrix, TransitionMatrix) else np.asarray(matrix)).astype(object)
    v = np.ones(A.shape[0], dtype=object)
    for _ in range(n - 1):
        v = A.T.dot(v)
    return int(v.sum() if end_symbol is None else v[end_symbol])


# ---------------------------------------------------------------------------
# exceptional sets


@dataclass(frozen=True)
class Candidate:
    point: float
    regular_backward_orbit_size: int
    verdict: str
    closure: tuple = ()


@dataclass(frozen=True)
class ExceptionalReport:
    sigma: tuple
    candidates: tuple
    e_max: tuple = field(default=())

    def to_dict(self):
        return {
            "sigma": list(self.sigma),
            "candidates": [
                {
                    "point": c.point,
                    "regular_backward_orbit_size": c.regular_backward_orbit_size,
                    "verdict": c.verdict,
                    "closure": list(c.closure),
                }
                for c in self.candidates
            ],
            "e_max": list(self.e_max),
        }


def boundary_singular_set(fmap: MultimodalMap, repeller: Repeller):
    """Critical points together with the endpoints of the effective components."""
    pts = set(c.location for c in fmap.critical_points)
    for iv in repeller.effective:
        pts.update((iv.lo, iv.hi))
    return tuple(sorted(pts))


def _close_to_any(x, pts, tol):
    return any(abs(x - p) <= tol for p in pts)


def regular_backward_orbit(repeller: Repeller, x, sigma, depth, limit=100):
    """Breadth-first closure of ``x`` under preimages in ``K`` avoiding ``sigma``.

    Returns ``(points, sizes_per_depth)``; expansion stops early once the
    set exceeds ``limit`` points.
    """
    fmap = repeller.map
    tol = 1e-10 * fmap.scale
    found = [float(x)]
    frontier = [float(x)]
    sizes = [1]
    for _ in range(depth):
        nxt = []
        for y in frontier:
            for pre in fmap.preimages(y, repeller.branches):
                if _close_to_any(pre.x, sigma, tol) or _close_to_any(pre.x, found, tol):
                    continue
                if _close_to_any(pre.x, nxt, tol):
                    continue
                nxt.append(pre.x)
        found.extend(nxt)
        frontier = nxt
        sizes.append(len(found))
        if len(found) > limit:
            break
    return sorted(found), sizes


def default_seeds(fmap: MultimodalMap, repeller: Repeller, depth=4):
    tol = 1e-12 * fmap.scale
    seeds = []
    for c in fmap.critical_points:
        if not repeller.in_effective(c.location):
            continue
        y = float(fmap(c.location))
        for _ in range(depth):
            if not repeller.in_effective(y) or _close_to_any(y, seeds, tol):
                break
            seeds.append(y)
            y = float(fmap(y))
    return tuple(seeds)


def exceptional_scan(fmap: MultimodalMap, repeller: Repeller, sigma=None, seeds=None, depth=8, limit=100):
    """Classify seeds by their regular backward orbits.

    A seed is weakly exceptional when the closure is unchanged over two
    consecutive depths (a stable finite set), not exceptional once the
    closure exceeds ``limit`` points, and inconclusive otherwise.
    """
    sigma = tuple(boundary_singular_set(fmap, repeller) if sigma is None else sigma)
    seeds = tuple(default_seeds(fmap, repeller, depth) if seeds is None else seeds)
    tol = 1e-10 * fmap.scale
    cands = []
    closures = []
    for s in seeds:
        pts, sizes = regular_backward_orbit(repeller, s, sigma, depth, limit)
        if len(pts) > limit:
            verdict = "not_exceptional"
        elif len(sizes) >= 3 and sizes[-1] == sizes[-2] == sizes[-3]:
            verdict = "weakly_exceptional"
            closures.append(pts)
        else:
            verdict = "inconclusive"
        cands.append(Candidate(float(s), len(pts), verdict, tuple(pts) if len(pts) <= limit else ()))
    e_max = []
    for pts in closures:
        orbit = list(pts)
        frontier = list(pts)
        for _ in range(limit):
            nxt = []
            for y in frontier:
                fy = float(fmap(y))
                if not _close_to_any(fy, orbit, tol) and not _close_to_any(fy, nxt, tol):
                    nxt.append(fy)
            if not nxt:
                break
            orbit.extend(nxt)
            frontier = nxt
        closed = True
        for y in orbit:
            back, _ = regular_backward_orbit(repeller, y, sigma, 1, limit)
            if any(not _close_to_any(b, orbit, tol) for b in back):
                closed = False
                break
        if closed and not frontier_nonempty(frontier, fmap, orbit, tol):
            for y in orbit:
                if not _close_to_any(y, e_max, tol):
                    e_max.append(y)
    return ExceptionalReport(sigma, tuple(cands), tuple(sorted(e_max)))


def frontier_nonempty(frontier, fmap, orbit, tol):
    """True when the forward closure did not terminate."""
    return any(not _close_to_any(float(fmap(y)), orbit, tol) for y in frontier)
