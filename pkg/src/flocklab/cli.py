"""Command-line interface for the flocking model laboratory.

Subcommands wrap the library analyses and emit deterministic CSV
(17 significant digits, CRLF line endings, header row) so that rerunning
a command with the same configuration reproduces the output byte for
byte.  Exit codes: 0 on success, 2 for configuration or usage problems,
3 when the numerics fail (no root bracket, lost positivity, indefinite
metric, stalled eigensolve, ...).

Every subcommand accepts --config FILE with a JSON object; explicit
flags override file values, which override built-in defaults.  Unknown
keys in the file are rejected.  Relative output paths are resolved
against $FLOCKLAB_OUTDIR when it is set; with no output path the table
goes to stdout.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import quadrature, stationary
from .errors import (BracketError, ConvergenceError, FlockLabError,
                     IndefiniteMetricError, MassConservationError,
                     PositivityError, QuadratureError)
from .evolution import SolverConfig, evolve, load_checkpoint
from .functionals import free_energy, q1_form
from .grids import (GridDensity, LineGrid, PolarGrid, discrete_reference,
                    gibbs_density)
from .quadrature import ModelParams
from .spectrum import report_csv_header, report_csv_row, spectral_report

_NUMERIC_ERRORS = (QuadratureError, BracketError, ConvergenceError,
                   PositivityError, MassConservationError,
                   IndefiniteMetricError)


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- output

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def _resolve_output(path: str | None) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    if not p.is_absolute():
        base = os.environ.get("FLOCKLAB_OUTDIR")
        if base:
            p = Path(base) / p
    if p.parent != Path("."):
        p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _emit_csv(path: Path | None, header, rows) -> None:
    def write(stream):
        w = csv.writer(stream)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])

    if path is None:
        write(sys.stdout)
    else:
        with open(path, "w", newline="") as fh:
            write(fh)


# ------------------------------------------------------- config plumbing

def _merge_config(args, schema: dict) -> dict:
    """flags > config file > defaults; unknown file keys are rejected."""
    cfg = dict(schema)
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            with open(config_path) as fh:
                file_cfg = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") \
                from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(file_cfg) - set(schema))
        if unknown:
            raise ConfigError(
                f"unknown config keys: {', '.join(unknown)}")
        cfg.update(file_cfg)
    for key in schema:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _require(cfg: dict, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise ConfigError(f"missing required settings: {', '.join(missing)}")


def _float_list(text: str):
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad number list {text!r}") from exc


def _noise_values(cfg) -> list:
    if cfg.get("D_list") is not None:
        vals = cfg["D_list"]
        if isinstance(vals, str):
            vals = _float_list(vals)
        return [float(v) for v in vals]
    _require(cfg, "D_min", "D_max", "num")
    num = int(cfg["num"])
    if num < 0:
        raise ConfigError("num must be nonnegative")
    if num == 0:
        return []
    if num == 1:
        return [float(cfg["D_min"])]
    return list(np.linspace(float(cfg["D_min"]), float(cfg["D_max"]), num))


def _map_ordered(fn, tasks, jobs: int):
    tasks = list(tasks)
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def _build_grid(gcfg, d: int) -> LineGrid | PolarGrid:
    """Grid from config; the dimension always comes from the model."""
    if gcfg is None:
        gcfg = {"kind": "line"} if d == 1 else {"kind": "polar"}
    if not isinstance(gcfg, dict):
        raise ConfigError("grid must be an object with a 'kind' key")
    kind = gcfg.get("kind")
    allowed = {
        "line": {"kind", "L", "N"},
        "polar": {"kind", "S", "Ns", "Ntheta"},
        "polar_full": {"kind", "S", "Ns", "Ntheta"},
    }
    if kind not in allowed:
        raise ConfigError(f"unknown grid kind {kind!r}")
    unknown = sorted(set(gcfg) - allowed[kind])
    if unknown:
        raise ConfigError(f"unknown grid keys: {', '.join(unknown)}")
    if kind == "line":
        if d != 1:
            raise ConfigError("line grid only represents d = 1")
        return LineGrid(float(gcfg.get("L", 4.0)), int(gcfg.get("N", 512)))
    if kind == "polar_full" and d != 2:
        raise ConfigError("full-circle grid only represents d = 2")
    return PolarGrid(d, float(gcfg.get("S", 3.0)), int(gcfg.get("Ns", 64)),
                     int(gcfg.get("Ntheta", 24)),
                     full=(kind == "polar_full"))


def _build_init(icfg, geometry, params: ModelParams) -> GridDensity:
    if not isinstance(icfg, dict):
        raise ConfigError("init must be an object with a 'kind' key")
    kind = icfg.get("kind")
    if kind == "gibbs":
        return gibbs_density(geometry, params, float(icfg.get("u", 0.0)))
    if kind == "perturbed_gibbs":
        base = gibbs_density(geometry, params, float(icfg.get("u", 0.0)))
        eps = float(icfg.get("eps", 0.1))
        if not abs(eps) < 1.0:
            raise ConfigError("perturbation eps must satisfy |eps| < 1")
        profile = icfg.get("profile", "tanh")
        if profile == "tanh":
            shape = np.tanh(geometry.v1)
        elif profile == "cos":
            shape = np.cos(geometry.v1)
        else:
            raise ConfigError(f"unknown perturbation profile {profile!r}")
        return GridDensity.normalized(geometry,
                                      base.values * (1.0 + eps * shape))
    if kind == "checkpoint":
        path = icfg.get("path")
        if not path:
            raise ConfigError("checkpoint init needs a 'path'")
        values, meta = load_checkpoint(path)
        if values.size != geometry.n_cells:
            raise ConfigError(
                f"checkpoint has {values.size} cells, grid expects "
                f"{geometry.n_cells}")
        return GridDensity(geometry, values.reshape(-1))
    raise ConfigError(f"unknown init kind {kind!r}")


# ----------------------------------------------------------- subcommands

def _critical_row(task):
    d, alpha = int(task[0]), float(task[1])
    dstar = stationary.critical_noise(d, alpha)
    residual = quadrature.h_function(ModelParams(d=d, alpha=alpha, D=dstar))
    return [d, alpha, dstar, residual, 1.0 / (d + 2), 1.0 / d]


def cmd_critical_noise(args) -> int:
    cfg = _merge_config(args, {"d": None, "alpha": None, "sweep": None,
                               "jobs": 1, "output": None})
    if cfg["sweep"] is not None:
        try:
            with open(cfg["sweep"]) as fh:
                entries = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read sweep file: {exc}") from exc
        if not isinstance(entries, list):
            raise ConfigError("sweep file must hold a JSON list")
        tasks = []
        for e in entries:
            if not isinstance(e, dict) or set(e) != {"d", "alpha"}:
                raise ConfigError(
                    "sweep entries must be objects with keys d, alpha")
            tasks.append((int(e["d"]), float(e["alpha"])))
    else:
        _require(cfg, "d", "alpha")
        tasks = [(int(cfg["d"]), float(cfg["alpha"]))]
    rows = _map_ordered(_critical_row, tasks, int(cfg["jobs"]))
    _emit_csv(_resolve_output(cfg["output"]),
              ["d", "alpha", "D_star", "residual", "lower_bound",
               "upper_bound"], rows)
    return 0


def _bifurcation_rows(task):
    d, alpha, D = task
    points = stationary.bifurcation_curve(int(d), float(alpha), [float(D)])
    return [[int(d), float(alpha), p.D, p.branch, p.u, p.residual,
             p.kappa, p.eta] for p in points]


def cmd_bifurcation(args) -> int:
    cfg = _merge_config(args, {"d": None, "alpha": None, "D_min": None,
                               "D_max": None, "num": None, "D_list": None,
                               "jobs": 1, "output": None})
    _require(cfg, "d", "alpha")
    values = _noise_values(cfg)
    tasks = [(int(cfg["d"]), float(cfg["alpha"]), D) for D in values]
    chunks = _map_ordered(_bifurcation_rows, tasks, int(cfg["jobs"]))
    rows = [row for chunk in chunks for row in chunk]
    _emit_csv(_resolve_output(cfg["output"]),
              ["d", "alpha", "D", "branch", "u", "residual", "kappa", "eta"],
              rows)
    return 0


def cmd_tabulate_h(args) -> int:
    cfg = _merge_config(args, {"d": None, "alpha_list": None, "D_min": 0.15,
                               "D_max": 1.2, "num": 64, "output": None})
    _require(cfg, "d", "alpha_list")
    alphas = cfg["alpha_list"]
    if isinstance(alphas, str):
        alphas = _float_list(alphas)
    values = _noise_values(dict(cfg, D_list=None))
    rows = []
    for alpha in alphas:
        for D in values:
            params = ModelParams(d=int(cfg["d"]), alpha=float(alpha), D=D)
            rows.append([int(cfg["d"]), float(alpha), D,
                         quadrature.h_function(params)])
    _emit_csv(_resolve_output(cfg["output"]), ["d", "alpha", "D", "h"], rows)
    return 0


def cmd_tabulate_big_h(args) -> int:
    cfg = _merge_config(args, {"d": None, "alpha": None, "D_list": None,
                               "u_min": 0.0, "u_max": 1.2, "num": 61,
                               "output": None})
    _require(cfg, "d", "alpha", "D_list")
    D_values = cfg["D_list"]
    if isinstance(D_values, str):
        D_values = _float_list(D_values)
    num = int(cfg["num"])
    if num < 2:
        raise ConfigError("num must be at least 2")
    u_values = np.linspace(float(cfg["u_min"]), float(cfg["u_max"]), num)
    rows = []
    for D in D_values:
        params = ModelParams(d=int(cfg["d"]), alpha=float(cfg["alpha"]),
                             D=float(D))
        for u in u_values:
            rows.append([params.d, params.alpha, params.D, float(u),
                         quadrature.H_of_u(float(u), params)])
    _emit_csv(_resolve_output(cfg["output"]),
              ["d", "alpha", "D", "u", "H"], rows)
    return 0


def cmd_evolve(args) -> int:
    cfg = _merge_config(args, {
        "d": None, "alpha": None, "D": None,
        "grid": None,
        "init": {"kind": "gibbs", "u": 0.0},
        "dt": None, "t_final": None,
        "time_stepping": "semi_implicit", "flux_scheme": "gibbs_weighted",
        "diagnostics_stride": 10, "checkpoint_stride": None,
        "checkpoint_dir": None, "reference_u": None, "output": None,
    })
    _require(cfg, "d", "alpha", "D", "dt", "t_final")
    params = ModelParams(d=int(cfg["d"]), alpha=float(cfg["alpha"]),
                         D=float(cfg["D"]))
    geometry = _build_grid(cfg["grid"], params.d)
    f0 = _build_init(cfg["init"], geometry, params)
    solver = SolverConfig(
        dt=float(cfg["dt"]), t_final=float(cfg["t_final"]),
        time_stepping=str(cfg["time_stepping"]),
        flux_scheme=str(cfg["flux_scheme"]),
        diagnostics_stride=int(cfg["diagnostics_stride"]),
        checkpoint_stride=(None if cfg["checkpoint_stride"] is None
                           else int(cfg["checkpoint_stride"])),
        checkpoint_dir=cfg["checkpoint_dir"])

    references = None
    if cfg["reference_u"] is not None:
        if cfg["reference_u"] == "auto":
            ref_state = stationary.make_stationary(params)
        else:
            ref_state = SimpleNamespace(u=float(cfg["reference_u"]))
        references = {"stationary": ref_state}

    trace = evolve(f0, params, solver, references=references)

    header = ["time", "mass", "mean1", "mean2", "free_energy", "fisher",
              "min_density"]
    columns = [trace.times, trace.mass, trace.mean1, trace.mean2,
               trace.free_energy, trace.fisher, trace.min_density]
    if references:
        header += ["rel_entropy", "free_energy_gap"]
        floor = trace.floors["stationary"]
        columns += [trace.relative_entropy["stationary"],
                    trace.free_energy - floor]
    rows = [[col[i] for col in columns] for i in range(trace.times.size)]
    _emit_csv(_resolve_output(cfg["output"]), header, rows)
    return 0


def _spectrum_row(task):
    cfg = task
    params = ModelParams(d=int(cfg["d"]), alpha=float(cfg["alpha"]),
                         D=float(cfg["D"]))
    geometry = _build_grid(cfg["grid"], params.d)
    report = spectral_report(params, geometry, branch=cfg["branch"],
                             refine=cfg["refine"])
    return report_csv_row(report)


def cmd_spectrum(args) -> int:
    cfg = _merge_config(args, {
        "d": None, "alpha": None, "D": None, "D_list": None,
        "branch": "auto",
        "grid": None,
        "refine": True, "jobs": 1, "output": None,
    })
    _require(cfg, "d", "alpha")
    if cfg["branch"] not in ("auto", "isotropic", "polarized"):
        raise ConfigError(f"unknown branch {cfg['branch']!r}")
    if cfg["D_list"] is not None:
        values = cfg["D_list"]
        if isinstance(values, str):
            values = _float_list(values)
    else:
        _require(cfg, "D")
        values = [float(cfg["D"])]
    tasks = [{"d": cfg["d"], "alpha": cfg["alpha"], "D": D,
              "grid": cfg["grid"], "branch": cfg["branch"],
              "refine": bool(cfg["refine"])} for D in values]
    rows = _map_ordered(_spectrum_row, tasks, int(cfg["jobs"]))
    _emit_csv(_resolve_output(cfg["output"]), report_csv_header(), rows)
    return 0


# ------------------------------------------------------------ check suite

def _suite_grid():
    for d in (1, 2, 3):
        for alpha in (0.5, 1.0, 2.0, 4.0, 16.0):
            for D in (0.35, 0.8):
                yield ModelParams(d=d, alpha=alpha, D=D)


def _check_ipp():
    worst = 0.0
    for params in _suite_grid():
        for n in range(11):
            lhs = (params.alpha * quadrature.j_moment(n + 4, params)
                   + (1.0 - params.alpha) * quadrature.j_moment(n + 2,
                                                                params))
            rhs = (n + 1) * params.D * quadrature.j_moment(n, params)
            worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs)))
    ok = worst <= 1e-8
    return ok, f"moment recursion, worst relative error {worst:.3e}"


def _check_square():
    worst = math.inf
    for params in _suite_grid():
        for n in range(7):
            combo = (quadrature.j_moment(n + 5, params)
                     - 2.0 * quadrature.j_moment(n + 3, params)
                     + quadrature.j_moment(n + 1, params))
            worst = min(worst, combo)
    ok = worst > 0.0
    return ok, f"squared-factor moment combination, smallest {worst:.3e}"


def _check_special_functions():
    diffs = []
    for d, alpha in ((1, 2.0), (2, 2.0), (2, 4.0)):
        r = stationary.special_function_check(d, alpha)
        diffs.append(r.difference)
    worst = max(diffs)
    ok = worst <= 1e-4
    return ok, f"closed-form roots, worst |difference| {worst:.3e}"


def _check_moment_lemmas():
    problems = []
    for d in (1, 2):
        alpha = 2.0
        dstar = stationary.critical_noise(d, alpha)
        for factor in (0.8, 0.95, 1.05, 1.2):
            params = ModelParams(d=d, alpha=alpha, D=factor * dstar)
            m = quadrature.stationary_moments(0.0, params)
            h = quadrature.h_function(params)
            if (m.speed_sq - d * params.D > 0) != (h > 0):
                problems.append(f"sign mismatch at d={d} D={params.D:.4f}")
    worst_transverse = 0.0
    for alpha in (2.0, 4.0):
        dstar = stationary.critical_noise(2, alpha)
        params = ModelParams(d=2, alpha=alpha, D=0.7 * dstar)
        state = stationary.make_stationary(params, branch="polarized")
        kap = stationary.kappa(state)
        if not 0.0 < kap < 1.0:
            problems.append(f"longitudinal variance bound fails, "
                            f"kappa={kap:.6f} at alpha={alpha}")
        rel = abs(state.moments.v2_sq - params.D) / params.D
        worst_transverse = max(worst_transverse, rel)
        if rel > 1e-6:
            problems.append(f"transverse moment off by {rel:.2e} "
                            f"at alpha={alpha}")
    ok = not problems
    detail = ("; ".join(problems) if problems else
              f"signs, variance bound, transverse moment "
              f"(worst {worst_transverse:.3e} relative)")
    return ok, detail


def _check_norm_equivalence():
    rng = np.random.default_rng(2024)
    margin = 0.0
    for D in (0.7, 1.0):
        params = ModelParams(d=1, alpha=2.0, D=D)
        geometry = LineGrid(4.0, 256)
        ref = discrete_reference(geometry, params, 0.0)
        lower = stationary.eta(params)
        for _ in range(20):
            g = rng.standard_normal(geometry.n_cells)
            g -= float(g @ ref.w)
            norm_sq = float(g * g @ ref.w)
            q1 = q1_form(g, ref)
            if not (lower * norm_sq <= q1 <= D * norm_sq * (1 + 1e-12)):
                return False, (f"violated at D={D}: eta*|g|^2="
                               f"{lower * norm_sq:.6e}, Q1={q1:.6e}, "
                               f"D*|g|^2={D * norm_sq:.6e}")
            margin = max(margin, q1 / (D * norm_sq))
    return True, (f"eta |g|^2 <= Q1 <= D |g|^2 on 40 random mean-zero "
                  f"perturbations (max Q1/(D|g|^2) = {margin:.6f})")


def _check_critical_noise_bounds():
    report = stationary.critical_noise_qualitative_suite()
    ok = not report.violations
    detail = ("; ".join(report.violations) if report.violations else
              f"bounds and monotonicity over {len(report.dstar)} "
              f"(d, alpha) pairs")
    return ok, detail


_CHECKS = {
    "ipp": _check_ipp,
    "square": _check_square,
    "special-functions": _check_special_functions,
    "moment-lemmas": _check_moment_lemmas,
    "norm-equivalence": _check_norm_equivalence,
    "critical-noise-bounds": _check_critical_noise_bounds,
}


def cmd_check(args) -> int:
    names = args.suites
    if "all" in names:
        names = list(_CHECKS)
    unknown = sorted(set(names) - set(_CHECKS))
    if unknown:
        raise ConfigError(
            f"unknown check suite(s): {', '.join(unknown)}; "
            f"choose from {', '.join(sorted(_CHECKS))} or 'all'")
    failures = 0
    for name in names:
        ok, detail = _CHECKS[name]()
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failures += 0 if ok else 1
    return 0 if failures == 0 else 3


# ----------------------------------------------------------------- parser

def _add_common(p):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("-o", "--output", help="output CSV path "
                   "(default stdout; relative paths use $FLOCKLAB_OUTDIR)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flocklab",
        description="numerical laboratory for the noisy alignment model")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("critical-noise",
                       help="phase transition threshold D*(d, alpha)")
    p.add_argument("--d", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--sweep", help="JSON file with a list of {d, alpha}")
    p.add_argument("--jobs", type=int)
    _add_common(p)
    p.set_defaults(func=cmd_critical_noise)

    p = sub.add_parser("bifurcation",
                       help="order parameter along a noise sweep")
    p.add_argument("--d", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--D-min", dest="D_min", type=float)
    p.add_argument("--D-max", dest="D_max", type=float)
    p.add_argument("--num", type=int)
    p.add_argument("--D-list", dest="D_list",
                   help="comma-separated noise values (overrides range)")
    p.add_argument("--jobs", type=int)
    _add_common(p)
    p.set_defaults(func=cmd_bifurcation)

    p = sub.add_parser("tabulate-h",
                       help="branch indicator h(D) for plotting")
    p.add_argument("--d", type=int)
    p.add_argument("--alpha-list", dest="alpha_list",
                   help="comma-separated alpha values")
    p.add_argument("--D-min", dest="D_min", type=float)
    p.add_argument("--D-max", dest="D_max", type=float)
    p.add_argument("--num", type=int)
    _add_common(p)
    p.set_defaults(func=cmd_tabulate_h)

    p = sub.add_parser("tabulate-H",
                       help="branch equation H(u) for plotting")
    p.add_argument("--d", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--D-list", dest="D_list",
                   help="comma-separated noise values")
    p.add_argument("--u-min", dest="u_min", type=float)
    p.add_argument("--u-max", dest="u_max", type=float)
    p.add_argument("--num", type=int)
    _add_common(p)
    p.set_defaults(func=cmd_tabulate_big_h)

    p = sub.add_parser("evolve", help="integrate the kinetic equation")
    p.add_argument("--dt", type=float)
    p.add_argument("--t-final", dest="t_final", type=float)
    p.add_argument("--diagnostics-stride", dest="diagnostics_stride",
                   type=int)
    _add_common(p)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("spectrum",
                       help="Poincare and coercivity constants")
    p.add_argument("--d", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--D", type=float)
    p.add_argument("--D-list", dest="D_list",
                   help="comma-separated noise values (sweep)")
    p.add_argument("--branch", choices=("auto", "isotropic", "polarized"))
    p.add_argument("--no-refine", dest="refine", action="store_false",
                   default=None)
    p.add_argument("--jobs", type=int)
    _add_common(p)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("check", help="run invariant suites")
    p.add_argument("suites", nargs="+",
                   help=f"all or any of: {', '.join(sorted(_CHECKS))}")
    p.set_defaults(func=cmd_check)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except FlockLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
