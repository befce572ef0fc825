"""Command-line front end.

Every subcommand accepts the model parameters as flags (``--b 0.3``), as
``--set key=value`` overrides, or through ``--config`` (a JSON file or any CSV
previously written by this tool). Outputs are CSV files whose first line
records the resolved configuration, so they can be re-run verbatim.

Exit status: 0 on success, 2 for configuration errors, 1 for numerical
failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .bifurcation import (
    BRANCH_CSV_HEADER,
    CURVE_CSV_HEADER,
    MAP_CSV_HEADER,
    POINTS_CSV_HEADER,
    codim2_curves,
    continue_branch,
    detect_fold,
    detect_hopf,
    detect_neutral_saddle,
    stability_map_2d,
)
from .equilibria import EQUILIBRIUM_CSV_HEADER, equilibrium_csv_rows, solve_E2
from .integrate import IntegrationError, average_divergence, integrate
from .model_core import DomainError, ModelParams
from .output import read_config_header, svg_heatmap, write_csv
from .pde import SPACETIME_CSV_HEADER, PdeConfig, classify_spacetime, first_arrival_time, pde_run

PARAM_HELP = {
    "a": "monocyte recruitment rate",
    "b": "macrophage uptake rate",
    "c": "monocyte-to-macrophage differentiation rate",
    "d": "oxidized LDL production rate",
    "e": "oxidized LDL consumption by macrophages",
    "f": "half-saturation constant",
    "epsilon": "monocyte clearance rate",
    "sigma": "wall shear stress",
}


class ConfigError(Exception):
    pass


def _range(text) -> tuple[float, float]:
    if isinstance(text, (list, tuple)):
        lo, hi = text
    else:
        lo, _, hi = str(text).partition(":")
    lo, hi = float(lo), float(hi)
    if not lo < hi:
        raise ValueError("range must be lo:hi with lo < hi")
    return (lo, hi)


def _floats(text) -> tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).split(","))


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# Per-subcommand options: name -> (converter, default, help).
OPTIONS: dict[str, dict[str, tuple[Callable, object, str]]] = {
    "timeseries": {
        "system": (str, "reduced", "reduced (m, M) or full (m, M, L, F)"),
        "ic": (_floats, (0.14, 0.2), "initial state, comma separated"),
        "t_end": (float, 2000.0, "final time"),
        "dt": (float, 1.0, "output interval"),
        "tol": (float, 1e-8, "relative tolerance"),
    },
    "equilibria": {},
    "bifurc1d": {
        "vary": (str, "b", "continuation parameter (b or d)"),
        "range": (_range, (0.01, 1.5), "parameter interval lo:hi"),
        "n": (int, 300, "branch samples"),
    },
    "bifurc2d": {
        "b_range": (_range, (0.01, 3.0), "b interval lo:hi"),
        "d_range": (_range, (0.2, 6.0), "d interval lo:hi"),
        "nd": (int, 120, "d slices"),
    },
    "stability-map": {
        "b_range": (_range, (0.01, 1.5), "b interval lo:hi"),
        "d_range": (_range, (0.1, 6.0), "d interval lo:hi"),
        "nb": (int, 60, "b grid points"),
        "nd": (int, 60, "d grid points"),
    },
    "divergence": {
        "grid": (int, 5, "initial conditions per axis"),
        "box": (float, 5.0, "initial conditions span (0, box] on both axes"),
        "t_end": (float, 10000.0, "averaging window"),
        "dt": (float, 2.0, "sampling interval"),
        "tol": (float, 1e-8, "relative tolerance"),
    },
    "pde": {
        "d1": (float, 1e-4, "diffusion of m"),
        "d2": (float, 1e-5, "diffusion of M"),
        "half_length": (float, 1.0, "domain is [-half_length, half_length]"),
        "nx": (int, 401, "grid points"),
        "t_end": (float, 2000.0, "final time"),
        "output_dt": (float, 10.0, "snapshot interval"),
        "psi": (float, 0.3, "Gaussian perturbation amplitude"),
        "sigma_ic": (float, 0.1, "Gaussian perturbation width"),
        "base": (str, "E2-", "homogeneous state perturbed (E2+ or E2-)"),
        "rtol": (float, 1e-6, "relative tolerance"),
        "svg": (_bool, True, "also write an SVG heatmap of m"),
    },
}

COMMAND_HELP = {
    "timeseries": "integrate the reduced or full system from one initial state",
    "equilibria": "interior equilibria with eigenvalues and stability class",
    "bifurc1d": "equilibrium branches and fold/Hopf/neutral-saddle points in b or d",
    "bifurc2d": "fold and Hopf curves in (b, d) with Bogdanov-Takens and generalized Hopf points",
    "stability-map": "stability class of both equilibria on a (b, d) grid",
    "divergence": "time-averaged divergence over a grid of initial states",
    "pde": "reaction-diffusion run from a Gaussian bump with outcome classification",
}

CHOICES = {"system": ("reduced", "full"), "vary": ("b", "d"), "base": ("E2+", "E2-")}


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plaquedyn",
        description="Monocyte/macrophage plaque model: equilibria, bifurcations, time series "
                    "and reaction-diffusion runs.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    defaults = ModelParams()
    for command, options in OPTIONS.items():
        sp = sub.add_parser(command, help=COMMAND_HELP[command], description=COMMAND_HELP[command])
        grp = sp.add_argument_group("model parameters")
        for key in ModelParams.keys():
            grp.add_argument(_flag(key), dest=f"param_{key}", type=float, default=None,
                             metavar="X", help=f"{PARAM_HELP[key]} (default {getattr(defaults, key)})")
        og = sp.add_argument_group("options")
        for key, (conv, default, text) in options.items():
            shown = ",".join(map(str, default)) if isinstance(default, tuple) else default
            if key in ("range", "b_range", "d_range"):
                shown = ":".join(map(str, default))
            og.add_argument(_flag(key), dest=f"opt_{key}", type=str, default=None, metavar="V",
                            choices=CHOICES.get(key), help=f"{text} (default {shown})")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any parameter or option")
        sp.add_argument("--config", metavar="PATH", help="JSON config or CSV written by this tool")
        sp.add_argument("--out", default="plaquedyn-out", help="output directory (default plaquedyn-out)")
        sp.add_argument("--workers", type=int, default=None,
                        help="parallel workers (default: logical core count)")
    return parser


def _convert(command: str, key: str, value):
    options = OPTIONS[command]
    if key in ModelParams.keys():
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"parameter {key!r}: not a number: {value!r}")
    if key not in options:
        raise ConfigError(f"unknown key {key!r} for {command}")
    conv = options[key][0]
    try:
        out = conv(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"option {key!r}: {exc}")
    if key in CHOICES and out not in CHOICES[key]:
        raise ConfigError(f"option {key!r} must be one of {', '.join(CHOICES[key])}")
    return out


def resolve(args) -> tuple[ModelParams, dict]:
    """Merge defaults, config file, flags and --set overrides (later wins)."""
    command = args.command
    params = ModelParams().to_dict()
    opts = {k: v[1] for k, v in OPTIONS[command].items()}

    def apply(key, value):
        key = key.replace("-", "_")
        val = _convert(command, key, value)
        (params if key in params else opts)[key] = val

    if args.config:
        path = Path(args.config)
        try:
            if path.suffix == ".csv":
                data = read_config_header(path)
            else:
                data = json.loads(path.read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}")
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        if data.get("command", command) != command:
            raise ConfigError(f"config is for {data['command']!r}, not {command!r}")
        for key, value in data.get("params", {}).items():
            if key not in params:
                raise ConfigError(f"unknown key {key!r} in params")
            apply(key, value)
        for key, value in data.get("options", {}).items():
            apply(key, value)
        for key, value in data.items():
            if key not in ("command", "params", "options"):
                apply(key, value)
    for key in ModelParams.keys():
        v = getattr(args, f"param_{key}")
        if v is not None:
            params[key] = v
    for key in OPTIONS[command]:
        v = getattr(args, f"opt_{key}")
        if v is not None:
            apply(key, v)
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        apply(key.strip(), value.strip())
    try:
        p = ModelParams(**params)
    except DomainError as exc:
        raise ConfigError(str(exc))
    return p, opts


def _header(command: str, p: ModelParams, opts: dict) -> dict:
    return {"command": command, "params": p.to_dict(),
            "options": {k: list(v) if isinstance(v, tuple) else v for k, v in opts.items()}}


# --------------------------------------------------------------------------
# subcommands


def cmd_timeseries(p, opts, out: Path, header, workers):
    traj = integrate(opts["system"], opts["ic"], p, opts["t_end"], tol=opts["tol"], dt_out=opts["dt"])
    cols = ("t",) + traj.columns
    path = write_csv(out / "timeseries.csv", cols, traj.rows(), header)
    print(f"wrote {path} ({len(traj)} samples)")


def cmd_equilibria(p, opts, out: Path, header, workers):
    eqs = solve_E2(p)
    path = write_csv(out / "equilibria.csv", EQUILIBRIUM_CSV_HEADER, equilibrium_csv_rows(eqs), header)
    for q in eqs:
        print(f"{q.branch}: m={q.m:.10g} M={q.M:.10g} {q.stability.value}"
              f"{'' if q.physical else ' (non-physical)'}")
    print(f"wrote {path}")


def cmd_bifurc1d(p, opts, out: Path, header, workers):
    param, rng = opts["vary"], opts["range"]
    branch = continue_branch(p, rng, opts["n"], param=param)
    cols = (param,) + BRANCH_CSV_HEADER[1:]
    write_csv(out / "branch.csv", cols, branch.rows(), header)
    points = [pt for pt in (detect_fold(p, rng, param=param), detect_hopf(p, rng, param=param),
                            detect_neutral_saddle(p, rng, param=param)) if pt is not None]
    rows = [(pt.kind.value, pt.b, pt.d, pt.lyapunov) for pt in points]
    path = write_csv(out / "points.csv", POINTS_CSV_HEADER, rows, header)
    for pt in points:
        extra = "" if pt.lyapunov is None else f" l1={pt.lyapunov:.6g}"
        print(f"{pt.kind.value}: b={pt.b:.8g} d={pt.d:.8g}{extra}")
    if branch.empty:
        print("no interior equilibria in range")
    print(f"wrote {path}")


def cmd_bifurc2d(p, opts, out: Path, header, workers):
    res = codim2_curves(p, None, opts["b_range"], opts["d_range"], nd=opts["nd"], workers=workers)
    rows = [("fold", b, d, None) for b, d in res.fold_curve]
    rows += [("hopf", b, d, l1) for b, d, l1 in res.hopf_curve]
    write_csv(out / "curves.csv", CURVE_CSV_HEADER, rows, header)
    path = write_csv(out / "points.csv", POINTS_CSV_HEADER, res.rows(), header)
    for pt in res.points:
        print(f"{pt.kind.value}: b={pt.b:.8g} d={pt.d:.8g}")
    print(f"wrote {path}")


def cmd_stability_map(p, opts, out: Path, header, workers):
    smap = stability_map_2d(p, opts["b_range"], opts["d_range"], opts["nb"], opts["nd"], workers=workers)
    path = write_csv(out / "stability_map.csv", MAP_CSV_HEADER, smap.rows(), header)
    print(f"wrote {path}")


def _divergence_task(args):
    p, ic, t_end, dt, tol = args
    traj = integrate("reduced", ic, p, t_end, tol=tol, dt_out=dt)
    return average_divergence(traj, p)


def cmd_divergence(p, opts, out: Path, header, workers):
    n, box = opts["grid"], opts["box"]
    axis = box * np.arange(1, n + 1) / n
    ics = [(m0, M0) for m0 in axis for M0 in axis]
    tasks = [(p, ic, opts["t_end"], opts["dt"], opts["tol"]) for ic in ics]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            values = list(ex.map(_divergence_task, tasks))
    else:
        values = [_divergence_task(t) for t in tasks]
    rows = [(ic[0], ic[1], v) for ic, v in zip(ics, values)]
    path = write_csv(out / "divergence.csv", ("m0", "M0", "average_divergence"), rows, header)
    print(f"max average divergence {max(values):.6g}, min {min(values):.6g}")
    print(f"wrote {path}")


def cmd_pde(p, opts, out: Path, header, workers):
    keys = {k: v for k, v in opts.items() if k != "svg"}
    try:
        cfg = PdeConfig(params=p, **keys)
    except ValueError as exc:
        raise ConfigError(str(exc))
    rec = pde_run(cfg)
    path = write_csv(out / "spacetime.csv", SPACETIME_CSV_HEADER, rec.rows(), header)
    outcome = classify_spacetime(rec)
    if opts["svg"]:
        svg = svg_heatmap(rec.m, rec.x, rec.times, title=f"m(x, t), b={p.b:g}")
        (out / "spacetime.svg").write_text(svg)
    print(f"outcome: {outcome.value}")
    print(f"boundary first arrival: {first_arrival_time(rec):g}")
    print(f"wrote {path}")


COMMANDS = {
    "timeseries": cmd_timeseries,
    "equilibria": cmd_equilibria,
    "bifurc1d": cmd_bifurc1d,
    "bifurc2d": cmd_bifurc2d,
    "stability-map": cmd_stability_map,
    "divergence": cmd_divergence,
    "pde": cmd_pde,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        p, opts = resolve(args)
        workers = args.workers if args.workers else (os.cpu_count() or 1)
        if workers < 1:
            raise ConfigError("--workers must be >= 1")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](p, opts, out, _header(args.command, p, opts), workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (IntegrationError, ArithmeticError, DomainError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
