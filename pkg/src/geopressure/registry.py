"""Built-in example maps and a loader for user registry files.

Registry files are INI documents with one ``[map:NAME]`` section per entry::

    [map:cubic]
    coefficients = 0, -3, 0, 4      ; ascending powers
    domain = -1:1                   ; components separated by ';'
    holes =                         ; open intervals lo:hi separated by ';'
    hole_cylinders = 11             ; words over the critical-point partition
    horizon = 64
    lipschitz_bound = 9.5

``hole_cylinders`` removes the interior of each listed cylinder, which is how
the ``notwi`` example is built from the cubic Chebyshev map.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass

from .errors import ConfigError
from .map_core import Interval, MultimodalMap, Repeller
from .symbolic import cylinder_interval


@dataclass(frozen=True)
class RegistryEntry:
    name: str
    coefficients: tuple
    domain: tuple
    holes: tuple = ()
    hole_cylinders: tuple = ()
    horizon: int = 64
    lipschitz_bound: float | None = None

    def build(self):
        fmap = MultimodalMap(self.name, self.coefficients, self.domain, lipschitz_bound=self.lipschitz_bound)
        holes = list(self.holes)
        for word in self.hole_cylinders:
            cyl = cylinder_interval(fmap, word)
            if cyl is None:
                raise ConfigError("hole_cylinders", f"word {word} is not admissible")
            holes.append(cyl)
        return fmap, Repeller(fmap, self.domain, holes, self.horizon, name=self.name)


def cheb3_entry():
    return RegistryEntry("cheb3", (0.0, -3.0, 0.0, 4.0), (Interval(-1.0, 1.0),))


def logistic_entry(lam):
    lam = float(lam)
    if not lam >= 4.0:
        raise ConfigError("lambda", f"logistic parameter must be >= 4 for a repeller, got {lam}")
    if lam == 4.0:
        domain = (Interval(0.0, 1.0),)
        name = "logistic4"
    else:
        a = 0.5 * (1.0 - math.sqrt(1.0 - 4.0 / lam))
        domain = (Interval(0.0, a), Interval(1.0 - a, 1.0))
        name = f"logistic({lam:g})"
    return RegistryEntry(name, (0.0, lam, -lam), domain)


def notwi_entry():
    return RegistryEntry("notwi", (0.0, -3.0, 0.0, 4.0), (Interval(-1.0, 1.0),), hole_cylinders=((1, 1),))


_LOGISTIC = re.compile(r"^logistic[:(]?\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*\)?$")


def builtin_entry(name):
    key = name.strip().lower()
    if key == "cheb3":
        return cheb3_entry()
    if key == "notwi":
        return notwi_entry()
    m = _LOGISTIC.match(key)
    if m:
        return logistic_entry(float(m.group(1)))
    return None


def _parse_intervals(text, field):
    out = []
    for chunk in (c.strip() for c in text.split(";")):
        if not chunk:
            continue
        try:
            lo, hi = (float(v) for v in chunk.split(":"))
            out.append(Interval(lo, hi))
        except ValueError as exc:
            raise ConfigError(field, f"cannot parse interval {chunk!r}") from exc
    return tuple(out)


def parse_registry(text):
    """Parse registry text into a dict of :class:`RegistryEntry` keyed by name."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("registry", str(exc)) from exc
    entries = {}
    for section in cp.sections():
        if not section.startswith("map:"):
            continue
        name = section[4:].strip()
        sec = cp[section]
        prefix = f"registry.{name}"
        try:
            coeffs = tuple(float(v) for v in sec.get("coefficients", "").split(",") if v.strip())
        except ValueError as exc:
            raise ConfigError(f"{prefix}.coefficients", "not a list of numbers") from exc
        if len(coeffs) < 2:
            raise ConfigError(f"{prefix}.coefficients", "need at least a linear polynomial")
        domain = _parse_intervals(sec.get("domain", ""), f"{prefix}.domain")
        if not domain:
            raise ConfigError(f"{prefix}.domain", "missing")
        holes = _parse_intervals(sec.get("holes", ""), f"{prefix}.holes")
        words = []
        for w in sec.get("hole_cylinders", "").split(","):
            w = w.strip()
            if w:
                if not w.isdigit():
                    raise ConfigError(f"{prefix}.hole_cylinders", f"bad word {w!r}")
                words.append(tuple(int(ch) for ch in w))
        try:
            horizon = sec.getint("horizon", 64)
            lip = sec.getfloat("lipschitz_bound", fallback=None)
        except ValueError as exc:
            raise ConfigError(prefix, str(exc)) from exc
        entries[name] = RegistryEntry(name, coeffs, domain, holes, tuple(words), horizon, lip)
    return entries


def load_map(name, registry_text=None):
    """Return ``(map, repeller)`` for a built-in name or an entry of ``registry_text``."""
    if registry_text:
        entries = parse_registry(registry_text)
        if name in entries:
            return entries[name].build()
    entry = builtin_entry(name)
    if entry is None:
        raise ConfigError("map", f"unknown map {name!r}")
    return entry.build()
