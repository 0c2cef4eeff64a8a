"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 numerical failure (including
a failed oracle check).  Floats are written with 17 significant digits.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, is_dataclass
from enum import Enum

import numpy as np

from . import __version__
from .asymptotics import Regime as AsymptoticRegime
from .asymptotics import run as run_asymptotics
from .charge_model import ChargeModel, load_model
from .errors import ConfigError, DomainError, NumericalError, TruncationError
from .observables import charge_density, critical_slope, observables, speed, variances
from .oracle import (bridge_superadditivity, enumerate_partition, ray_knight_check,
                     series_coefficients, simulate_chain)
from .phase_diagram import ROOT_TOL, Regime, beta_critical, delta_critical, phase_point
from .rate_functions import rate_curve
from .sturm_liouville import DEFAULT_L, DEFAULT_M, SLGrid, a_star, chi

BUILTIN_MODELS = {
    "gaussian": {"kind": "gaussian"},
    "lattice-pm1": {"kind": "lattice", "values": [-1, 1], "probs": [0.5, 0.5]},
}
SCAN_COLUMNS = ["delta", "beta", "mu", "mu_tilde", "F", "v", "rho", "sigma_v2", "sigma_rho2",
                "regime", "status"]


# ---------------------------------------------------------------- formatting

def fmt_float(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _plain(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return {k: _plain(v) for k, v in asdict(obj).items()}
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def to_json(obj) -> str:
    """JSON text with 17-digit floats; non-finite floats become strings."""
    obj = _plain(obj)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        text = fmt_float(obj)
        return text if math.isfinite(obj) else json.dumps(text)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(k)}: {to_json(v)}" for k, v in obj.items()) + "}"
    return "[" + ", ".join(to_json(v) for v in obj) + "]"


def _cell(value) -> str:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (float, np.floating)):
        return fmt_float(value)
    return str(value)


def to_csv(rows, columns) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(c, "")) for c in columns])
    return buf.getvalue()


def _emit(text, out):
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _tabular(rows, columns, args, config):
    if args.format == "json":
        return to_json({"config": config, "rows": rows}) + "\n"
    return to_csv(rows, columns)


# ------------------------------------------------------------------- helpers

def resolve_model(source) -> ChargeModel:
    if source in BUILTIN_MODELS:
        return ChargeModel.from_descriptor(BUILTIN_MODELS[source])
    return load_model(source)


def grid(bounds, name):
    lo, hi, steps = bounds
    steps = int(steps)
    if steps < 1:
        raise ConfigError(f"{name} needs at least one step")
    if steps == 1:
        return [float(lo)]
    return [float(v) for v in np.linspace(float(lo), float(hi), steps)]


def _axis(args, single, ranged, name):
    value, span = getattr(args, single), getattr(args, ranged)
    if span is not None:
        return grid(span, name)
    if value is None:
        raise ConfigError(f"give --{single} or --{ranged.replace('_', '-')}")
    return [value]


def workers() -> int:
    raw = os.environ.get("POLYMER_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"POLYMER_THREADS must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError("POLYMER_THREADS must be positive")
    return n


def parallel_map(fn, items):
    """Ordered map, in a process pool when more than one worker is allowed."""
    n = min(workers(), len(items))
    if n <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _config(args, model):
    skip = {"func"}
    cfg = {k: v for k, v in vars(args).items() if k not in skip}
    cfg["model"] = model.descriptor()
    cfg["version"] = __version__
    return cfg


# ------------------------------------------------------------------ commands

def cmd_point(args):
    model = resolve_model(args.model)
    pp = phase_point(model, args.delta, args.beta, tol=args.tol, trunc=args.trunc)
    obs = observables(model, args.delta, args.beta, trunc=args.trunc)
    report = {"config": _config(args, model), "phase_point": pp, "observables": obs}
    _emit(to_json(report) + "\n", args.out)
    return 0


def scan_row(task):
    descriptor, delta, beta, trunc, tol = task
    model = ChargeModel.from_descriptor(descriptor)
    row = {"delta": delta, "beta": beta}
    try:
        pp = phase_point(model, delta, beta, tol=tol, trunc=trunc)
        row.update(mu=pp.mu, mu_tilde=pp.mu_tilde, F=pp.f_total, regime=pp.regime)
        if pp.regime is Regime.SUBBALLISTIC:
            row.update(v=0.0, rho=0.0)
        else:
            row.update(v=speed(model, delta, beta, trunc), rho=charge_density(model, delta, beta, trunc))
        try:
            row["sigma_v2"], row["sigma_rho2"] = variances(model, delta, beta, trunc)
        except DomainError:
            row["sigma_v2"] = row["sigma_rho2"] = math.nan
        row["status"] = "ok"
    except (ConfigError, NumericalError) as exc:
        row["status"] = f"{type(exc).__name__}: {exc}".replace("\n", " ")
    return row


def cmd_scan(args):
    model = resolve_model(args.model)
    deltas = _axis(args, "delta", "delta_range", "delta range")
    betas = _axis(args, "beta", "beta_range", "beta range")
    if min(deltas) < 0 or min(betas) <= 0:
        raise ConfigError("scan ranges must lie in delta >= 0, beta > 0")
    tasks = [(model.descriptor(), d, b, args.trunc, args.tol) for d in deltas for b in betas]
    rows = parallel_map(scan_row, tasks)
    _emit(_tabular(rows, SCAN_COLUMNS, args, _config(args, model)), args.out)
    return 0 if all(r["status"] == "ok" for r in rows) else 3


def critical_row(task):
    descriptor, axis, value, trunc, tol, with_slope = task
    model = ChargeModel.from_descriptor(descriptor)
    row = {axis: value}
    try:
        if axis == "delta":
            root = beta_critical(model, value, tol=tol, trunc=trunc)
            row.update(beta_c=root.value, residual=root.residual, trunc_n=root.trunc_n)
            if with_slope:
                row["K_delta"] = critical_slope(model, value, trunc)
        else:
            root = delta_critical(model, value, tol=tol, trunc=trunc)
            row.update(delta_c=root.value, residual=root.residual, trunc_n=root.trunc_n)
        row["status"] = "ok"
    except TruncationError as exc:
        lo, hi = exc.bracket or (math.nan, math.nan)
        row["status"] = f"bracketed in [{fmt_float(lo)}, {fmt_float(hi)}]"
    except (ConfigError, NumericalError) as exc:
        row["status"] = f"{type(exc).__name__}: {exc}"
    return row


def cmd_critical_curve(args):
    model = resolve_model(args.model)
    if args.beta_range is not None:
        axis, values, columns = "beta", grid(args.beta_range, "beta range"), \
            ["beta", "delta_c", "residual", "trunc_n", "status"]
    else:
        axis, values = "delta", _axis(args, "delta", "delta_range", "delta range")
        columns = ["delta", "beta_c", "residual", "trunc_n"]
        columns += ["K_delta", "status"] if args.slope else ["status"]
    tasks = [(model.descriptor(), axis, v, args.trunc, args.tol, args.slope) for v in values]
    rows = parallel_map(critical_row, tasks)
    _emit(_tabular(rows, columns, args, _config(args, model)), args.out)
    return 0 if all(r["status"] == "ok" for r in rows) else 3


def cmd_rate_function(args):
    model = resolve_model(args.model)
    thetas = grid(args.theta_range, "theta range")
    curve = rate_curve(model, args.delta, args.beta, args.kind, thetas, trunc=args.trunc)
    rows = [{"theta": t, "value": v, "is_flat": int(f)}
            for t, v, f in zip(curve.thetas, curve.values, curve.is_flat)]
    cfg = _config(args, model)
    cfg.update(flat_end=curve.flat_end, flat_slope=curve.flat_slope,
               boundary_value=curve.boundary_value)
    _emit(_tabular(rows, ["theta", "value", "is_flat"], args, cfg), args.out)
    return 0


def cmd_sturm(args):
    sl_grid = SLGrid(args.x_max, args.points)
    if args.a_star:
        rows = [{"b": b, "a_star": a_star(b, sl_grid)} for b in args.b]
        columns = ["b", "a_star"]
    else:
        if args.a_range is None:
            raise ConfigError("sturm needs --a-range or --a-star")
        rows = []
        for b in args.b:
            for a in grid(args.a_range, "a range"):
                sol = chi(a, b, sl_grid)
                rows.append({"a": a, "b": b, "chi": sol.chi, "refinement_gap": sol.refinement_gap})
        columns = ["a", "b", "chi", "refinement_gap"]
    _emit(_tabular(rows, columns, args, {k: v for k, v in vars(args).items() if k != "func"}),
          args.out)
    return 0


def _check_ray_knight(args, model):
    reports = [ray_knight_check(n) for n in (2, 4, 6, 8, 10, 12)]
    worst = max(r.tv_distance for r in reports)
    return worst < 1e-10, {"tv_distance": {r.n: r.tv_distance for r in reports},
                           "max_tv_distance": worst, "threshold": 1e-10}


def _check_series(args, model):
    cases = [(ChargeModel.gaussian(), 1.0, 0.5), (resolve_model("lattice-pm1"), 0.7, 0.3)]
    out = {}
    worst = 0.0
    for m, d, b in cases:
        label = f"{m.kind.value}(delta={d},beta={b})"
        z = {kind: [enumerate_partition(m, d, b, n, "free" if kind == "full" else kind).z_star
                    for n in range(15)] for kind in ("bridge", "loop", "full")}
        for kind in ("bridge", "loop"):
            c = series_coefficients(m, d, b, 14, kind)
            err = max(abs(c[n] / z[kind][n] - 1.0) if z[kind][n] else abs(c[n])
                      for n in range(1, 15))
            out[f"{label}/{kind}/max_rel_error"] = err
            worst = max(worst, err)
        c = series_coefficients(m, d, b, 14, "full")
        ratios = [c[n] / z["full"][n] for n in range(1, 15)]
        spread = max(abs(r / ratios[0] - 1.0) for r in ratios)
        out[f"{label}/full/kappa"] = ratios[0]
        out[f"{label}/full/kappa_spread"] = spread
        worst = max(worst, spread)
    out["threshold"] = 1e-9
    return worst < 1e-9, out


def _check_superadditivity(args, model):
    margin = bridge_superadditivity(model, args.delta, args.beta)
    return margin >= -1e-12, {"min_margin": margin, "threshold": -1e-12}


def _check_chain(args, model):
    est = simulate_chain(model, args.delta, args.beta, args.steps, args.seed)
    target = 1.0 / speed(model, args.delta, args.beta)
    z = abs(est.mean_y - target) / est.stderr
    return z <= 3.0, {"mean_y": est.mean_y, "one_over_v": target, "stderr": est.stderr,
                      "z_score": z, "var_y": est.var_y, "var_stderr": est.var_stderr}


ORACLE_CHECKS = {
    "ray-knight": _check_ray_knight,
    "series": _check_series,
    "superadditivity": _check_superadditivity,
    "chain": _check_chain,
}


def cmd_oracle(args):
    model = resolve_model(args.model)
    passed, details = ORACLE_CHECKS[args.check](args, model)
    report = {"check": args.check, "passed": passed, "details": details,
              "config": _config(args, model)}
    _emit(to_json(report) + "\n", args.out)
    return 0 if passed else 3


def cmd_asymptotics(args):
    model = resolve_model(args.model)
    report = run_asymptotics(model, args.regime)
    _emit(to_json({"report": report, "config": _config(args, model)}) + "\n", args.out)
    return 0


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chargedpolymer",
                                     description="Annealed charged polymer phase diagram tools")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, fmt=True):
        p.add_argument("--model", default="gaussian",
                       help="JSON descriptor file, or one of: " + ", ".join(BUILTIN_MODELS))
        p.add_argument("--trunc", type=int, default=None, help="fixed truncation N")
        p.add_argument("--tol", type=float, default=ROOT_TOL)
        p.add_argument("--out", default=None)
        if fmt:
            p.add_argument("--format", choices=["csv", "json"], default="csv")

    p = sub.add_parser("point", help="phase point and observables as JSON")
    common(p, fmt=False)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.set_defaults(func=cmd_point)

    p = sub.add_parser("scan", help="grid scan over (delta, beta)")
    common(p)
    p.add_argument("--delta", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--delta-range", nargs=3, type=float, metavar=("MIN", "MAX", "STEPS"))
    p.add_argument("--beta-range", nargs=3, type=float, metavar=("MIN", "MAX", "STEPS"))
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("critical-curve", help="beta_c over delta, or delta_c over beta")
    common(p)
    p.add_argument("--delta", type=float)
    p.add_argument("--delta-range", nargs=3, type=float, metavar=("MIN", "MAX", "STEPS"))
    p.add_argument("--beta-range", nargs=3, type=float, metavar=("MIN", "MAX", "STEPS"))
    p.add_argument("--slope", action="store_true", help="also report K_delta")
    p.set_defaults(func=cmd_critical_curve)

    p = sub.add_parser("rate-function", help="rate function samples")
    common(p)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--kind", choices=["speed", "charge"], default="speed")
    p.add_argument("--theta-range", nargs=3, type=float, metavar=("MIN", "MAX", "STEPS"),
                   default=[0.0, 1.0, 51])
    p.set_defaults(func=cmd_rate_function)

    p = sub.add_parser("sturm", help="Sturm-Liouville eigenvalues or their zeros")
    p.add_argument("--a-range", nargs=3, type=float, metavar=("MIN", "MAX", "STEPS"))
    p.add_argument("--b", nargs="+", type=float, default=[1.0])
    p.add_argument("--a-star", action="store_true")
    p.add_argument("--x-max", type=float, default=DEFAULT_L)
    p.add_argument("--points", type=int, default=DEFAULT_M)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.set_defaults(func=cmd_sturm)

    p = sub.add_parser("oracle", help="ground-truth checks, JSON report")
    common(p, fmt=False)
    p.add_argument("--check", choices=sorted(ORACLE_CHECKS), required=True)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=0.2)
    p.add_argument("--steps", type=int, default=10 ** 6)
    p.add_argument("--seed", type=int, default=20240601)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("asymptotics", help="asymptotic regression report")
    common(p, fmt=False)
    p.add_argument("--regime", choices=[r.value for r in AsymptoticRegime], required=True)
    p.set_defaults(func=cmd_asymptotics)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
