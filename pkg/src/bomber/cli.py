"""Command-line front end: ``bomber {eval,solve,boundary,verify,simulate}``.

Exit codes: 0 success, 1 usage error, 2 domain error, 3 failed verification.
Settings come from flags, then an optional ``--config`` JSON file, then defaults.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile

import numpy as np

from .model import (
    DomainError,
    ModelParams,
    Region,
    UnsupportedRegionError,
    boundary_f,
    classify_region,
    closed_form_K,
    closed_form_P,
)
from .montecarlo import (
    ClosedForm,
    Fractional,
    GridInterpolated,
    SimConfig,
    SpendAll,
    estimate_survival,
    result_row,
)
from .quadrature import QuadratureConfig
from .solver import GridSpec, numeric_K, numeric_P, solve_integral_equation
from .verify import boundary_detect, run_verification

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_VERIFY = 0, 1, 2, 3

DEFAULTS = {
    "u": None,
    "x": None,
    "t": None,
    "x_max": 5.0,
    "t_max": 5.0,
    "nx": 2001,
    "nt": 2001,
    "scheme": "rk4",
    "abs_tol": 1e-10,
    "rel_tol": 1e-10,
    "seed": 0,
    "n_runs": 100_000,
    "streams": 1,
    "policy": "closed-form",
    "out": None,
    "format": "csv",
    "quick": False,
    "numeric": False,
}

BOUNDARY_TIMES = (0.25, 0.5, 1.0, 2.0, 4.0)
QUICK_GRID = {"nx": 401, "nt": 401}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def fmt(value):
    """17 significant digits, enough to round-trip a double."""
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def _build_parser():
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON file of settings (overridden by flags)")
    common.add_argument("--u", type=float, help="counterattack survival parameter, 0 <= u < 1")
    common.add_argument("--x", type=float, help="ammunition")
    common.add_argument("--t", type=float, action="append", help="time to go (boundary: repeatable)")
    common.add_argument("--x-max", dest="x_max", type=float)
    common.add_argument("--t-max", dest="t_max", type=float)
    common.add_argument("--nx", type=int)
    common.add_argument("--nt", type=int)
    common.add_argument("--scheme", choices=["rk4", "euler"])
    common.add_argument("--abs-tol", dest="abs_tol", type=float)
    common.add_argument("--rel-tol", dest="rel_tol", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--n-runs", dest="n_runs", type=int)
    common.add_argument("--streams", type=int, help="independent RNG streams")
    common.add_argument("--policy", help="closed-form, grid, spend-all or fractional:C")
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("--format", choices=["csv", "json"])
    common.add_argument("--quick", action="store_true", help="smaller samples and grid")
    common.add_argument("--numeric", action="store_true", help="use a solved grid")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="bomber", description="Bomber Problem: exact and numerical solutions")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("eval", parents=[common], help="region, f_u(t), K and P at one state")
    sub.add_parser("solve", parents=[common], help="solve the integral equation on a grid")
    sub.add_parser("boundary", parents=[common], help="detected vs analytic spend-it-all boundary")
    sub.add_parser("verify", parents=[common], help="run the verification battery")
    sub.add_parser("simulate", parents=[common], help="Monte Carlo survival estimate")
    return parser


def _settings(ns):
    cfg = dict(DEFAULTS)
    flags = vars(ns)
    if "config" in flags:
        try:
            with open(flags["config"]) as fh:
                loaded = json.load(fh)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    cfg.update({k: v for k, v in flags.items() if k in DEFAULTS})
    if isinstance(cfg["t"], (int, float)):
        cfg["t"] = [cfg["t"]]
    return cfg


def _require(cfg, *names):
    for name in names:
        if cfg[name] is None:
            raise UsageError(f"--{name.replace('_', '-')} is required")


def _objects(cfg):
    """Validate everything up front so bad flags never start a computation."""
    _require(cfg, "u")
    try:
        params = ModelParams(cfg["u"])
        grid_kw = {k: cfg[k] for k in ("x_max", "t_max", "nx", "nt", "scheme")}
        if cfg["quick"] and cfg["command"] in ("verify", "boundary"):
            grid_kw.update(QUICK_GRID)
        spec = GridSpec(**grid_kw)
        quad = QuadratureConfig(cfg["abs_tol"], cfg["rel_tol"])
        sim = SimConfig(cfg["n_runs"], cfg["seed"], cfg["streams"])
    except (DomainError, ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from exc
    return params, spec, quad, sim


def _emit(cfg, header, rows, payload=None):
    """Write CSV rows or a JSON payload to --out (atomically) or stdout."""
    if cfg["format"] == "json":
        text = json.dumps(payload if payload is not None else [dict(zip(header, r)) for r in rows],
                          indent=2) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows([fmt(v) for v in r] for r in rows)
        text = buf.getvalue()
    out = cfg["out"]
    if out is None:
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(out))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".bomber-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, out)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _region_name(code):
    return Region(int(code)).name


def cmd_eval(cfg):
    _require(cfg, "x", "t")
    params, spec, quad, _ = _objects(cfg)
    x, t = cfg["x"], cfg["t"][0]
    if x < 0 or t <= 0:
        raise UsageError("eval needs x >= 0 and t > 0")
    region = classify_region(x, t, params)
    f = float(boundary_f(t, params))
    if cfg["numeric"]:
        grid = solve_integral_equation(params, spec)
        k, p = numeric_K(grid, x, t), numeric_P(grid, x, t)
        source = "numeric"
    else:
        if region == Region.OUTSIDE:
            raise UnsupportedRegionError("no closed form outside R2")
        k, p = closed_form_K(x, t, params), closed_form_P(x, t, params, quad)
        source = "closed-form"
    header = ["x", "t", "u", "region", "f_u", "K", "P", "source"]
    row = [x, t, params.u, region.name, f, k, p, source]
    _emit(cfg, header, [row], dict(zip(header, row)))
    return EXIT_OK


def cmd_solve(cfg):
    params, spec, _, _ = _objects(cfg)
    grid = solve_integral_equation(params, spec)
    x, t = grid.x, grid.t
    X, T = np.meshgrid(x, t, indexing="ij")
    region = np.full(X.shape, int(Region.R1))
    region[:, 1:] = classify_region(X[:, 1:], T[:, 1:], params)
    p = grid.p
    header = ["x", "t", "region", "pbar", "p", "kstar"]
    if cfg["format"] == "json":
        payload = {"u": params.u, "x": x.tolist(), "t": t.tolist(),
                   "region": [[_region_name(c) for c in row] for row in region],
                   "pbar": grid.pbar.tolist(), "p": p.tolist(), "kstar": grid.kstar.tolist()}
        _emit(cfg, header, [], payload)
        return EXIT_OK
    names = {int(r): r.name for r in Region}
    rows = ((x[i], t[j], names[region[i, j]], grid.pbar[i, j], p[i, j], grid.kstar[i, j])
            for i in range(x.size) for j in range(t.size))
    _emit(cfg, header, rows)
    return EXIT_OK


def cmd_boundary(cfg):
    params, spec, _, _ = _objects(cfg)
    times = cfg["t"] or [tb for tb in BOUNDARY_TIMES if tb <= spec.t_max]
    for tb in times:
        if not 0 < tb <= spec.t_max:
            raise UsageError(f"boundary time {tb} outside (0, t_max]")
    grid = solve_integral_equation(params, spec)
    header = ["t", "x_detected", "x_analytic", "gap"]
    rows = []
    for tb in times:
        est = boundary_detect(grid, tb)
        rows.append([est.t, est.x_detected, est.x_analytic, est.gap])
    _emit(cfg, header, rows)
    return EXIT_OK


def cmd_verify(cfg):
    params, spec, quad, _ = _objects(cfg)
    grid = solve_integral_equation(params, spec)
    report = run_verification(params, grid=grid, quick=cfg["quick"], seed=cfg["seed"], quad=quad)
    if cfg["format"] == "json":
        sys.stdout.write(report.to_json() + "\n")
    else:
        sys.stdout.write(report.to_text() + "\n")
    if cfg["out"] is not None:
        text = report.to_json() + "\n"
        directory = os.path.dirname(os.path.abspath(cfg["out"]))
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".bomber-", suffix=".tmp")
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, cfg["out"])
    return EXIT_OK if report.passed else EXIT_VERIFY


def _make_policy(cfg, params, spec):
    name = cfg["policy"]
    if name == "spend-all":
        return SpendAll()
    if name.startswith("fractional"):
        try:
            c = float(name.split(":", 1)[1])
            return Fractional(c)
        except (IndexError, ValueError, DomainError) as exc:
            raise UsageError("fractional policy needs fractional:C with 0 <= C <= 1") from exc
    if name == "grid":
        return GridInterpolated(solve_integral_equation(params, spec))
    if name == "closed-form":
        fallback = solve_integral_equation(params, spec) if cfg["numeric"] else None
        return ClosedForm(params, fallback)
    raise UsageError(f"unknown policy {name!r}")


def cmd_simulate(cfg):
    _require(cfg, "x", "t")
    params, spec, _, sim = _objects(cfg)
    x, t = cfg["x"], cfg["t"][0]
    if x < 0 or t < 0:
        raise UsageError("simulate needs x >= 0 and t >= 0")
    policy = _make_policy(cfg, params, spec)
    res = estimate_survival(policy, x, t, params, sim)
    row = result_row(policy, x, t, params, sim, res)
    _emit(cfg, list(row), [list(row.values())], [row])
    return EXIT_OK


COMMANDS = {
    "eval": cmd_eval,
    "solve": cmd_solve,
    "boundary": cmd_boundary,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
}


def main(argv=None):
    parser = _build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if getattr(ns, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _settings(ns)
        cfg["command"] = ns.command
        return COMMANDS[ns.command](cfg)
    except UsageError as exc:
        print(f"bomber: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        print(f"bomber: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
