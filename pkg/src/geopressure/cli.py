"""Command-line driver: ``geopressure SUBCOMMAND --map NAME [options]``.

Settings come from built-in defaults, then the ``[run]`` section of
``--config``, then explicit flags.  The merged settings are validated
against ``data/config_schema.json`` before anything is computed.

Exit status is 0 on success, 2 for a configuration error and 3 when a
computation could not produce a result.  Failures confined to one grid
sample are written into the output instead of aborting the run.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import conformal, inducing, pressure, symbolic, tce_suite
from ._validation import parse_grid
from .errors import ComputationError, ConfigError, Divergent, GeoPressureError
from .map_core import Interval, singular_set
from .orbit_engine import weak_isolation_check
from .registry import load_map

REPORT_SCHEMA_VERSION = "1.0"
SUBCOMMANDS = ("pressure", "tce", "conformal", "induce", "coding", "exceptional", "all")
EXIT_OK, EXIT_CONFIG, EXIT_COMPUTE = 0, 2, 3


def load_schema():
    text = resources.files("geopressure").joinpath("data/config_schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def defaults(schema=None):
    schema = load_schema() if schema is None else schema
    return {k: v["default"] for k, v in schema["properties"].items() if "default" in v}


def _convert(key, raw, entry):
    """Turn config-file text into the type named by the schema entry."""
    types = entry.get("type", "string")
    types = [types] if isinstance(types, str) else list(types)
    text = raw.strip()
    if "null" in types and text.lower() in ("", "none", "null"):
        return None
    try:
        if "boolean" in types:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if "integer" in types:
            return int(text)
        if "number" in types:
            return float(text)
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from exc
    return text


def read_config_file(path, schema):
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError("config", str(exc)) from exc
    if not parser.has_section("run"):
        raise ConfigError("config", f"{path} has no [run] section")
    props = schema["properties"]
    out = {}
    for key, raw in parser.items("run"):
        if key not in props:
            raise ConfigError(key, "unknown setting")
        out[key] = _convert(key, raw, props[key])
    return out


def validate(settings, schema):
    """Raise :class:`ConfigError` naming the first offending field."""
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(settings), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        field = ".".join(str(p) for p in err.absolute_path) or (
            err.message.split("'")[1] if err.validator == "additionalProperties" and "'" in err.message else "config"
        )
        raise ConfigError(field, err.message)
    try:
        settings["_t_values"] = tuple(parse_grid(settings["t_grid"]))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("t_grid", str(exc)) from exc
    unknown = set(_methods(settings)) - {"tree", "periodic", "markov", "induced"}
    if unknown:
        raise ConfigError("methods", f"unknown methods {sorted(unknown)}")
    return settings


def _methods(settings):
    return tuple(m.strip() for m in settings["methods"].split(",") if m.strip())


# ---------------------------------------------------------------------------
# argument parsing

_FLAGS = {
    "t_grid": str,
    "depth": int,
    "methods": str,
    "markov_depth": int,
    "radius": float,
    "depth_cap": int,
    "horizon": int,
    "bins": int,
    "t": float,
    "lambda": float,
    "k_max": int,
    "test_intervals": int,
    "n_uhp": int,
    "r_exp": float,
    "n_exp": int,
    "samples": int,
    "n_ce2": int,
    "rule_II_n": int,
    "rule_II_samples": int,
    "wi_n_max": int,
    "wi_margin": float,
    "exceptional_depth": int,
    "seed": int,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError("arguments", message)


def build_parser():
    parser = _Parser(prog="geopressure", description="Pressure, inducing and conformal-measure workbench for interval maps.")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--map", dest="map")
    parser.add_argument("--registry", help="INI registry file with [map:NAME] sections")
    parser.add_argument("--config", help="INI file whose [run] section holds settings")
    parser.add_argument("--out", help="output directory; results go to standard output when omitted")
    tail = parser.add_mutually_exclusive_group()
    tail.add_argument("--tail", dest="tail", action="store_true", default=None)
    tail.add_argument("--no-tail", dest="tail", action="store_false")
    for key, kind in _FLAGS.items():
        parser.add_argument("--" + key.replace("_", "-"), dest=key, type=kind)
    return parser


def _join_values(argv):
    """Glue ``--flag -2:3`` into ``--flag=-2:3`` so negative grids survive argparse."""
    out = []
    it = iter(argv)
    for a in it:
        if a.startswith("--") and "=" not in a and a[2:].replace("-", "_") in ("t_grid", "t", "wi_margin", "lambda"):
            nxt = next(it, None)
            out.append(a if nxt is None else f"{a}={nxt}")
        else:
            out.append(a)
    return out


def resolve_settings(argv):
    schema = load_schema()
    ns = build_parser().parse_args(_join_values(list(argv)))
    settings = defaults(schema)
    if ns.config:
        settings.update(read_config_file(ns.config, schema))
    cli = {k: v for k, v in vars(ns).items() if v is not None and k != "config"}
    settings.update(cli)
    return validate(settings, schema)


# ---------------------------------------------------------------------------
# deterministic serialization


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def dump_json(obj):
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def tagged(value, method, depth):
    """A number together with the method that produced it and its depth."""
    return {"value": value, "method": method, "depth": depth}


def _report(kind, settings, body):
    params = {k: v for k, v in settings.items() if not k.startswith("_") and k not in ("out", "registry")}
    return {"schema_version": REPORT_SCHEMA_VERSION, "report": kind, "parameters": params, **body}


# ---------------------------------------------------------------------------
# subcommands; each returns an ordered list of (file name, text)


def _pressure_estimate(fmap, rep, t, depth):
    return pressure.periodic_pressure_bracket(fmap, rep, t, depth)[0]


def run_pressure(fmap, rep, s):
    depth = s["depth"]
    methods = _methods(s)
    system = None
    if "induced" in methods:
        couple = inducing.build_nice_couple(fmap, rep, s["radius"], s["horizon"])
        system = inducing.enumerate_branches(fmap, rep, couple, s["depth_cap"], keep_orbits=False)
    curve = pressure.pressure_curve(
        fmap, rep, s["_t_values"], methods=methods, depth=depth, markov_depth=s["markov_depth"], induced_system=system
    )
    chi = pressure.chi_bounds(fmap, rep, depth)
    body = {"chi_bounds": {
        "chi_inf": tagged(chi.chi_inf, chi.method_tags.get("chi_inf", "census"), depth),
        "chi_sup": tagged(chi.chi_sup, chi.method_tags.get("chi_sup", "census"), depth),
    }}
    errors = {}
    try:
        column = pressure.default_column(curve)
    except ValueError as exc:
        column = None
        errors["column"] = str(exc)
    if column is not None:
        try:
            tm, tp = pressure.phase_points(curve, chi, column)
            body["t_minus"] = tagged(tm, f"line_fit:{column}", depth)
            body["t_plus"] = tagged(tp, f"line_fit:{column}", depth)
        except ComputationError as exc:
            errors["phase_points"] = str(exc)
        try:
            body["bowen_root"] = tagged(pressure.bowen_root(curve, column), f"pchip:{column}", depth)
        except ComputationError as exc:
            errors["bowen_root"] = str(exc)
    body["samples"] = [_sample_record(smp, s) for smp in curve]
    body["errors"] = errors
    return [("pressure.csv", pressure.curve_to_csv(curve, chi)), ("pressure.json", dump_json(_report("pressure", s, body)))]


def _sample_record(smp, s):
    """One pressure sample; every value is tagged with its method and depth."""
    d = smp.depth_used
    values = {
        "p_tree": tagged(smp.p_tree, "tree_richardson", d),
        "p_tree_raw": tagged(smp.p_tree_raw, "tree", d),
        "p_per": tagged(smp.p_per, "periodic_richardson", d),
        "p_per_raw": tagged(smp.p_per_raw, "periodic", d),
        "p_markov": tagged(smp.p_markov, "markov_bracket", s["markov_depth"]),
        "p_induced": tagged(smp.p_induced, "induced_truncated", s["depth_cap"]),
        "error_bracket": tagged(smp.error_bracket, "raw_vs_extrapolated", d),
        "z_spread": tagged(smp.z_spread, "tree_base_point_spread", d),
    }
    return {"t": smp.t, "method": "pressure_curve", "depth": d, "values": values, "errors": smp.errors}


def run_tce(fmap, rep, s):
    keys = ("n_uhp", "r_exp", "n_exp", "samples", "n_ce2", "depth", "rule_II_n", "rule_II_samples", "seed")
    r = tce_suite.tce_report(fmap, rep, {k: s[k] for k in keys})
    body = {
        "lambda_per": dict(tagged(r.lambda_per, "periodic_multipliers", s["n_uhp"]), margin=r.margins["lambda_per"]),
        "lambda_exp": dict(
            tagged(r.lambda_exp, "pullback_diameters", s["n_exp"]),
            margin=r.margins["lambda_exp"],
            fit_interval=r.fit_intervals["lambda_exp"],
        ),
        "lambda_ce2": dict(
            tagged(r.lambda_ce2, "backward_tree_min_derivative", s["n_ce2"]),
            margin=r.margins["lambda_ce2"],
            fit_interval=r.fit_intervals["lambda_ce2"],
            z0=r.parameters["z0"],
        ),
        "negative_pressure_t": dict(tagged(r.negative_pressure_t, "tree", s["depth"]), margin=r.margins["negative_pressure"]),
        "indifferent_orbits": tagged(r.indifferent_orbits, "periodic_multipliers", s["n_uhp"]),
        "rule_II": dict(r.rule_II, method="forward_critical_approach", depth=s["rule_II_n"]),
        "consistent": r.consistent,
    }
    return [("tce.json", dump_json(_report("tce", s, body)))]


def run_conformal(fmap, rep, s):
    t, k_max = s["t"], s["k_max"]
    z0 = pressure.safe_base_points(fmap, rep, count=1)[0]
    p_est = _pressure_estimate(fmap, rep, t, s["depth"])
    lam = s["lambda"] if s["lambda"] is not None else math.exp(p_est) * (1.0 + 1e-3)
    mu = conformal.patterson_sullivan(fmap, rep, z0, t, lam, k_max)
    intervals = conformal.lap_interior_intervals(fmap, rep, s["test_intervals"], seed=s["seed"])
    defect = conformal.conformality_defect(fmap, mu, t, lam, intervals, repeller=rep)
    sing = singular_set(fmap, rep)
    star = conformal.star_defect_at_no_points(fmap, mu, t, lam, sing.no_points)
    body = {
        "pressure_estimate": tagged(p_est, "periodic", s["depth"]),
        "measure": {
            "method": "patterson_sullivan",
            "depth": k_max,
            "t": t,
            "lambda": lam,
            "lambda_source": "config" if s["lambda"] is not None else "exp_periodic_pressure_times_1.001",
            "z0": z0,
            "atom_count": int(mu.points.size),
            "level_log_mass": mu.meta.get("level_log_mass", []),
        },
        "conformality_defect": tagged(defect, "patterson_sullivan", k_max),
        "test_intervals": tagged([iv.as_tuple() for iv in intervals], "random_lap_interior", 1),
        "star_defect": [dict(d.to_dict(), method="patterson_sullivan", depth=k_max) for d in star],
    }
    return [
        ("conformal.json", dump_json(_report("conformal", s, body))),
        ("conformal.csv", mu.to_csv()),
        ("conformal_cdf.csv", mu.cdf_csv(domain=Interval(fmap.domain[0].lo, fmap.domain[-1].hi))),
    ]


def run_induce(fmap, rep, s):
    t, cap, tail = s["t"], s["depth_cap"], s["tail"]
    couple = inducing.build_nice_couple(fmap, rep, s["radius"], s["horizon"])
    system = inducing.enumerate_branches(fmap, rep, couple, cap)
    method = "induced_tail" if tail else "induced_truncated"
    p_ref = _pressure_estimate(fmap, rep, t, s["depth"])
    lo, hi = inducing.induced_pressure(system, t, p_ref, tail=tail)
    body = {
        "system": dict(system.to_dict(max_branches=200), method="canonical_induced_map", depth=cap),
        "reference_pressure": tagged(p_ref, "periodic", s["depth"]),
        "induced_pressure_at_reference": {"lo": lo, "hi": hi, "method": method, "depth": cap},
        "errors": {},
    }
    try:
        p_star = inducing.solve_p(system, t, tail=tail)
        body["solve_p"] = tagged(p_star, method, cap)
    except ComputationError as exc:
        p_star = None
        body["errors"]["solve_p"] = str(exc)
    if p_star is not None:
        try:
            hist = inducing.equilibrium_projection(system, t, p_star, bins=s["bins"])
            body["projection"] = dict(hist.to_dict(), method="induced_perron", depth=cap)
        except ComputationError as exc:
            body["errors"]["projection"] = str(exc)
    return [("induce.json", dump_json(_report("induce", s, body)))]


def run_coding(fmap, rep, s):
    matrix = symbolic.transition_matrix(fmap, rep)
    body = {
        "transition_matrix": dict(matrix.to_dict(), method="markov_partition", depth=1),
        "entropy": tagged(symbolic.spectral_entropy(matrix), "spectral_radius", 1),
        "flags": symbolic.transitivity_flags(matrix),
    }
    return [("coding.json", dump_json(_report("coding", s, body)))]


def run_exceptional(fmap, rep, s):
    scan = symbolic.exceptional_scan(fmap, rep, depth=s["exceptional_depth"])
    wi = weak_isolation_check(fmap, rep, s["wi_n_max"], s["wi_margin"])
    body = {
        "exceptional": dict(scan.to_dict(), method="regular_backward_closure", depth=s["exceptional_depth"]),
        "weak_isolation": dict(wi.to_dict(), method="periodic_census", depth=s["wi_n_max"]),
    }
    return [("exceptional.json", dump_json(_report("exceptional", s, body)))]


RUNNERS = {
    "pressure": run_pressure,
    "tce": run_tce,
    "conformal": run_conformal,
    "induce": run_induce,
    "coding": run_coding,
    "exceptional": run_exceptional,
}


def run(settings, stdout=None):
    """Execute one validated run; returns the list of produced ``(name, text)`` artifacts."""
    stdout = sys.stdout if stdout is None else stdout
    registry_text = None
    if settings.get("registry"):
        try:
            registry_text = Path(settings["registry"]).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError("registry", str(exc)) from exc
    fmap, rep = load_map(settings["map"], registry_text)
    sub = settings["subcommand"]
    if sub == "all" and not settings.get("out"):
        raise ConfigError("out", "the all subcommand writes several files and needs an output directory")
    names = [k for k in RUNNERS] if sub == "all" else [sub]
    artifacts = []
    for name in names:
        np.random.seed(settings["seed"])
        artifacts += RUNNERS[name](fmap, rep, settings)
    if settings.get("out"):
        out = Path(settings["out"])
        out.mkdir(parents=True, exist_ok=True)
        for fname, text in artifacts:
            (out / fname).write_text(text, encoding="utf-8")
    else:
        stdout.write(artifacts[0][1])
    return artifacts


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        settings = resolve_settings(argv)
        run(settings)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ComputationError, Divergent) as exc:
        print(f"computation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except GeoPressureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
