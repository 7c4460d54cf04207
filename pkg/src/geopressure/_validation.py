"""Small argument checkers used at public entry points."""

import math
import numbers

from .errors import ConfigError


def check_real(value, name, *, lo=None, hi=None, allow_inf=False):
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ConfigError(name, f"expected a real number, got {value!r}")
    value = float(value)
    if math.isnan(value) or (math.isinf(value) and not allow_inf):
        raise ConfigError(name, f"expected a finite number, got {value!r}")
    if lo is not None and value < lo:
        raise ConfigError(name, f"must be >= {lo}, got {value}")
    if hi is not None and value > hi:
        raise ConfigError(name, f"must be <= {hi}, got {value}")
    return value


def check_natural(value, name, *, lo=0, hi=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ConfigError(name, f"expected an integer, got {value!r}")
    value = int(value)
    if value < lo:
        raise ConfigError(name, f"must be >= {lo}, got {value}")
    if hi is not None and value > hi:
        raise ConfigError(name, f"must be <= {hi}, got {value}")
    return value


def check_grid(values, name):
    grid = [check_real(v, name) for v in values]
    if not grid:
        raise ConfigError(name, "grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError(name, "grid must be strictly increasing")
    return grid


def parse_grid(text, name="t_grid"):
    """Parse ``start:stop:step`` (inclusive stop) or a comma list."""
    text = text.strip()
    try:
        if ":" in text:
            start, stop, step = (float(s) for s in text.split(":"))
            if step <= 0:
                raise ConfigError(name, "step must be positive")
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            if count < 1:
                raise ConfigError(name, "empty range")
            return check_grid([round(start + k * step, 12) for k in range(count)], name)
        return check_grid([float(s) for s in text.split(",") if s.strip()], name)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(name, f"cannot parse {text!r}") from exc
