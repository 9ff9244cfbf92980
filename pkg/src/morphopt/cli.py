"""Command line front end: INI configs, run / check-gradient / study."""

import argparse
import configparser
import dataclasses
import logging
import os
import sys

from . import driver
from .fem import InvertedElementError, SolveError

log = logging.getLogger("morphopt")


class ConfigError(ValueError):
    pass


def _bool(s):
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError("not a boolean: %r" % s)


def _floats(s):
    return tuple(float(t) for t in s.replace(";", ",").split(",") if
                 t.strip())


def _box(s):
    v = _floats(s)
    if len(v) != 4:
        raise ConfigError("a box needs 4 numbers: ax, ay, bx, by")
    return ((v[0], v[1]), (v[2], v[3]))


def _pair(s):
    v = _floats(s)
    if len(v) != 2:
        raise ConfigError("expected 2 numbers")
    return v


def _tagmap(s):
    out = {}
    for item in s.split(","):
        if not item.strip():
            continue
        k, _, v = item.partition(":")
        out[int(k)] = v.strip()
    return out


# [section][key] -> (converter, RunConfig field); problem-parameter keys are
# typed separately per kind below
_SCHEMA = {
    "mesh": {
        "source": (str, "mesh_source"),
        "path": (str, "msh_path"),
        "tags": (_tagmap, "msh_tags"),
        "box": (_box, "box"),
        "n_theta": (int, "n_theta"),
        "n_r": (int, "n_r"),
        "grading": (float, "grading"),
        "nx": (int, "nx"),
        "ny": (int, "ny"),
        "refinements": (int, "refinements"),
        "clamp_frac": (float, "clamp_frac"),
        "load_frac": (float, "load_frac"),
    },
    "fem": {
        "degree": (int, "degree"),
        "isoparametric": (_bool, "isoparametric"),
    },
    "spline": {
        "degree": (int, "spline_degree"),
        "cells": (int, "spline_cells"),
        "level": (int, None),
        "box": (_box, "spline_box"),
    },
    "optimizer": {
        "max_iterations": (int, "max_iterations"),
        "step_grid": (_floats, "step_grid"),
        "det_threshold": (float, "det_threshold"),
        "grad_tol": (float, "grad_tol"),
        "j_ref": (float, "j_ref"),
        "seed": (int, "seed"),
    },
    "output": {
        "dir": (str, "out_dir"),
        "write_vtk": (_bool, "write_vtk"),
    },
}

_PROBLEM_KEYS = {
    "bernoulli": {"g": float, "target_radius": float, "inner_value": float,
                  "guess_center": _pair, "guess_radius": float,
                  "inner_tag": str, "outer_tag": str},
    "model": {"guess_center": _pair, "guess_radius": float},
    "stokes": {"obstacle_center": _pair, "obstacle_radius": float,
               "mu0": float, "mu1": float, "mu2": float,
               "obstacle_tag": str, "inflow_tag": str, "outflow_tag": str,
               "wall_tag": str},
    "elasticity": {"young": float, "poisson": float, "plane_stress": _bool,
                   "load": _pair, "mu0": float, "mu1": float, "mu2": float,
                   "clamp_tag": str, "load_tag": str},
}


def load_config(path):
    """Parse an INI run configuration.

    Keys are case sensitive, '#' starts a comment, unknown sections or keys
    are rejected, and anything omitted falls back to the per-kind defaults
    with a logged notice.
    """
    if not os.path.exists(path):
        raise ConfigError("config file not found: %s" % path)
    cp = configparser.ConfigParser(comment_prefixes=("#",),
                                   inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read(path)
    except configparser.Error as err:
        raise ConfigError("malformed config: %s" % err) from err

    for section in cp.sections():
        if section not in _SCHEMA and section != "problem":
            raise ConfigError("unknown section [%s]" % section)

    kind = "bernoulli"
    if cp.has_section("problem") and cp.has_option("problem", "kind"):
        kind = cp.get("problem", "kind").strip()
    else:
        log.info("no [problem] kind given, defaulting to bernoulli")
    if kind not in _PROBLEM_KEYS:
        raise ConfigError("unknown problem kind %r" % kind)

    config = driver.default_config(kind)
    defaults_used = []
    if cp.has_section("problem"):
        params = dict(config.problem_params)
        for key, raw in cp.items("problem"):
            if key == "kind":
                continue
            if key not in _PROBLEM_KEYS[kind]:
                raise ConfigError("unknown key %r in [problem] for kind %s"
                                  % (key, kind))
            try:
                params[key] = _PROBLEM_KEYS[kind][key](raw)
            except (ValueError, ConfigError) as err:
                raise ConfigError("bad value for problem.%s: %s"
                                  % (key, err)) from err
        config.problem_params = params

    level = None
    for section, keys in _SCHEMA.items():
        if not cp.has_section(section):
            defaults_used.append(section)
            continue
        for key, raw in cp.items(section):
            if key not in keys:
                raise ConfigError("unknown key %r in [%s]" % (key, section))
            conv, field = keys[key]
            try:
                value = conv(raw)
            except (ValueError, ConfigError) as err:
                raise ConfigError("bad value for %s.%s: %s"
                                  % (section, key, err)) from err
            if field is None:
                level = value
            else:
                setattr(config, field, value)
    if level is not None:
        if cp.has_option("spline", "cells"):
            raise ConfigError("give spline cells or level, not both")
        config.spline_cells = 2 ** level
    if defaults_used:
        log.info("sections %s not given, using %s defaults",
                 ", ".join(defaults_used), kind)
    _validate(config)
    return config


def _validate(config):
    if config.degree not in (1, 2):
        raise ConfigError("fem degree must be 1 or 2")
    if config.spline_degree not in (1, 2, 3):
        raise ConfigError("spline degree must be 1, 2 or 3")
    if config.spline_cells <= config.spline_degree:
        raise ConfigError("spline cells must exceed the spline degree")
    if config.max_iterations < 0:
        raise ConfigError("max_iterations must be nonnegative")
    if not 0.0 < config.det_threshold < 1.0:
        raise ConfigError("det_threshold must lie in (0, 1)")
    if config.mesh_source == "msh" and not config.msh_path:
        raise ConfigError("mesh source 'msh' needs a path")
    if any(s < 0.0 or s > 1.0 for s in config.step_grid):
        raise ConfigError("step grid values must lie in [0, 1]")


def _apply_overrides(config, args):
    if args.out_dir is not None:
        config.out_dir = args.out_dir
    if args.seed is not None:
        config.seed = args.seed
    if getattr(args, "budget", None) is not None:
        config.max_iterations = args.budget
    if not config.out_dir:
        config.out_dir = "morphopt-out"
    return config


def _cmd_run(args):
    config = _apply_overrides(load_config(args.config), args)
    result = driver.optimize(config)
    last = result.history[-1]
    print("iterations=%d J=%.17g Jerr=%.17g grad_norm=%.3e stop=%s"
          % (last.iter, last.J, last.Jerr, last.grad_norm,
             result.stop_reason))
    print("artifacts in %s" % config.out_dir)
    return 0


def _cmd_check_gradient(args):
    config = _apply_overrides(load_config(args.config), args)
    kwargs = {}
    if args.steps is not None:
        steps = _floats(args.steps)
        if len(steps) < 2 or any(s <= 0.0 for s in steps):
            raise ConfigError("need at least 2 positive step sizes")
        kwargs["steps"] = steps
    result = driver.gradient_check(config, seed=config.seed, **kwargs)
    print("order=%s" % ("exact" if result.exact else "%.6g" % result.order))
    return 0


def _cmd_study(args):
    config = _apply_overrides(load_config(args.config), args)
    try:
        levels = [int(t) for t in args.levels.split(",") if t.strip()]
    except ValueError as err:
        raise ConfigError("bad levels %r" % args.levels) from err
    result = driver.convergence_study(config, axis=args.axis, levels=levels)
    print("rate=%.6g%s" % (result.rate,
                           " (warning: error not monotone)"
                           if result.warning else ""))
    print("rates in %s" % os.path.join(config.out_dir, "rates.csv"))
    return 0


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    ap = argparse.ArgumentParser(
        prog="morphopt",
        description="shape optimization runs driven by INI configs")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="INI config path")
        p.add_argument("--out-dir", default=None)
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("run", help="optimize and write history artifacts")
    common(p)
    p.add_argument("--budget", type=int, default=None,
                   help="override max_iterations")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("check-gradient",
                       help="Taylor-remainder order of the shape derivative")
    common(p)
    p.add_argument("--steps", default=None,
                   help="comma-separated step sizes for the remainder fit")
    p.set_defaults(func=_cmd_check_gradient)

    p = sub.add_parser("study", help="convergence study over levels")
    common(p)
    p.add_argument("--axis", choices=("mesh", "grid"), default="mesh")
    p.add_argument("--levels", default="1,2,3",
                   help="comma-separated level list")
    p.add_argument("--budget", type=int, default=None,
                   help="override max_iterations per level")
    p.set_defaults(func=_cmd_study)

    args = ap.parse_args(argv)
    try:
        return args.func(args)
    # InvertedElementError subclasses MeshError/ValueError, so the
    # numerical-failure clause must come first
    except (SolveError, InvertedElementError, FloatingPointError) as err:
        print("numerical failure: %s" % err, file=sys.stderr)
        return 3
    except (ConfigError, ValueError, OSError) as err:
        print("configuration error: %s" % err, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
