"""Command-line driver: ``fbpbarrier <command> [flags]``.

Every run writes its artifacts (CSV curves, JSON summaries) and a
``manifest.json`` with the resolved configuration, library versions and
seeds to the ``--out`` directory.

Exit codes: 0 success, 1 invariant violation, 2 I/O error, 64 usage error.
"""
from __future__ import annotations

import argparse
import json
import math
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .barriers import run_barriers, separating_element
from .errors import ConvergenceError, FbpError
from .mcoracle import McConfig, mc_mass_loss
from .movingboundary import EdgePath, build_quasi_solution, sandwich_check
from .profile import (MassProfile, add, block_profile, load_profile, stationary_profile,
                      stationary_tail, triangle_profile)

EXIT_OK, EXIT_VIOLATION, EXIT_IO, EXIT_USAGE = 0, 1, 2, 64

PRESETS = ("stationary", "triangle", "bump")

DEFAULTS = {
    "j": 1.0, "a": 2.0, "grid_h": 1 / 512, "rmax": None, "delta": 0.05, "k": 20,
    "levels": None, "t": 0.5, "T": 1.0, "eps": "0.1,0.05,0.025", "tol": 1e-2,
    "seed": 0, "paths": 20000, "dt": 1e-3, "c_margin": 10.0, "steps": 20,
    "preset": None, "input": None, "out": "fbp_out",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser):
    g = p.add_argument_group("model and grid")
    g.add_argument("--j", type=float, help="injection rate (default 1)")
    g.add_argument("--a", type=float, help="stationary profile intercept (default 2)")
    g.add_argument("--grid-h", dest="grid_h", type=float, help="cell width (default 1/512)")
    g.add_argument("--rmax", type=float, help="largest radius the input may occupy")
    g.add_argument("--preset", choices=PRESETS, help="built-in initial profile")
    g.add_argument("--in", dest="input", help="profile file (.json, or .csv with --grid-h)")
    g.add_argument("--out", help="output directory (default fbp_out)")
    g.add_argument("--config", help="JSON file with any of these flags; flags win")
    r = p.add_argument_group("run parameters")
    r.add_argument("--delta", type=float, help="barrier time step")
    r.add_argument("--k", type=int, help="barrier steps")
    r.add_argument("--levels", help="dyadic levels, e.g. 3..8 (a single number is the maximum)")
    r.add_argument("--t", type=float, help="target time")
    r.add_argument("--T", type=float, help="horizon for quasi-solutions")
    r.add_argument("--eps", help="comma-separated accuracy ladder")
    r.add_argument("--tol", type=float, help="gap tolerance")
    r.add_argument("--steps", type=int, help="implicit steps per slice")
    r.add_argument("--c-margin", dest="c_margin", type=float, help="sandwich constant (default 10)")
    m = p.add_argument_group("Monte Carlo")
    m.add_argument("--seed", type=int)
    m.add_argument("--paths", type=int)
    m.add_argument("--dt", type=float, help="Monte Carlo time step")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fbpbarrier", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    helps = {
        "barriers": "iterate lower/upper barriers and write their tail curves",
        "separating": "separating element by dyadic refinement",
        "quasi": "build quasi-solutions for an accuracy ladder",
        "validate": "quasi-solutions vs barriers and Monte Carlo; writes a verdict",
        "stationary-check": "separating element of a stationary profile vs closed form",
    }
    for name, text in helps.items():
        _common(sub.add_parser(name, help=text, description=text))
    return parser


def _resolve(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise OSError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")
        for key, val in data.items():
            k = key.lstrip("-").replace("-", "_")
            if k == "in":
                k = "input"
            if k not in cfg:
                raise UsageError(f"unknown config key {key!r}")
            cfg[k] = val
    for key, val in vars(args).items():
        if key in cfg and val is not None:
            cfg[key] = val
    cfg["command"] = args.command
    _validate(cfg)
    return cfg


def _validate(cfg: dict):
    for key in ("j", "a", "grid_h", "delta", "t", "T", "tol", "dt", "c_margin"):
        if not (isinstance(cfg[key], (int, float)) and cfg[key] > 0 and math.isfinite(cfg[key])):
            raise UsageError(f"--{key.replace('_', '-')} must be a positive number, got {cfg[key]!r}")
    for key in ("k", "paths", "steps"):
        if not (isinstance(cfg[key], int) and cfg[key] >= 1):
            raise UsageError(f"--{key} must be a positive integer, got {cfg[key]!r}")
    if cfg["rmax"] is not None and not cfg["rmax"] > 0:
        raise UsageError("--rmax must be positive")
    if cfg["preset"] is not None and cfg["preset"] not in PRESETS:
        raise UsageError(f"--preset must be one of {', '.join(PRESETS)}")
    if cfg["preset"] and cfg["input"]:
        raise UsageError("give either --preset or --in, not both")
    cfg["eps_list"] = parse_eps(cfg["eps"])
    cfg["level_range"] = parse_levels(cfg["levels"]) if cfg["levels"] is not None else None


def parse_eps(text) -> list:
    if isinstance(text, (int, float)):
        vals = [float(text)]
    elif isinstance(text, list):
        vals = [float(v) for v in text]
    else:
        try:
            vals = [float(v) for v in str(text).split(",") if v.strip()]
        except ValueError:
            raise UsageError(f"--eps must be a comma-separated list of numbers, got {text!r}")
    if not vals or any(not v > 0 for v in vals):
        raise UsageError("--eps values must be positive")
    return vals


def parse_levels(text) -> tuple:
    """``"3..8"`` -> (3, 8); ``"8"`` -> (None, 8)."""
    s = str(text)
    try:
        if ".." in s:
            lo, hi = s.split("..", 1)
            lo, hi = int(lo), int(hi)
        else:
            lo, hi = None, int(s)
    except ValueError:
        raise UsageError(f"--levels must look like 3..8 or 8, got {text!r}")
    if hi < 0 or (lo is not None and not 0 <= lo <= hi):
        raise UsageError(f"--levels range {text!r} is empty or negative")
    return lo, hi


def initial_profile(cfg: dict) -> MassProfile:
    h, a, j = cfg["grid_h"], cfg["a"], cfg["j"]
    if cfg["input"]:
        u = load_profile(cfg["input"], cell_width=h)
    else:
        preset = cfg["preset"] or "stationary"
        if preset == "stationary":
            u = stationary_profile(a, j, h)
        elif preset == "triangle":
            # hat of unit mass on [0, 1]
            u = triangle_profile(0.0, 0.25, 1.0, 2.0, h)
        else:
            u = add(stationary_profile(a, j, h), block_profile(0.2, 0.4, 0.5, h))
    if cfg["rmax"] is not None and u.trimmed().support_end > cfg["rmax"] + 1e-12:
        raise UsageError(f"profile support {u.support_end:.6g} exceeds --rmax {cfg['rmax']:.6g}")
    return u


def _versions() -> dict:
    return {"fbpbarrier": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def _write(out: Path, name: str, text: str) -> str:
    (out / name).write_text(text)
    return name


def _manifest(out: Path, cfg: dict, files: list, status: str):
    clean = {k: v for k, v in cfg.items() if k not in ("eps_list", "level_range")}
    data = {"config": clean, "versions": _versions(), "seeds": {"mc_seed": cfg["seed"]},
            "files": files, "status": status}
    (out / "manifest.json").write_text(json.dumps(data, indent=2, sort_keys=True))


# commands -------------------------------------------------------------------

def cmd_barriers(cfg: dict, out: Path):
    u = initial_profile(cfg)
    j = cfg["j"]
    if cfg["level_range"] is not None:
        lo, hi = cfg["level_range"]
        lo = hi if lo is None else lo
        plans = [(f"barriers_level{l}", cfg["t"] / 2 ** l, 2 ** l) for l in range(lo, hi + 1)]
    else:
        plans = [("barriers", cfg["delta"], cfg["k"])]
    files, summary, ok = [], [], True
    for name, delta, k in plans:
        run = run_barriers(u, delta, j, k, check=False)
        bad = run.violations(grid_tol=5 * cfg["grid_h"])
        ok &= not bad
        files.append(_write(out, name + ".csv", run.to_csv()))
        summary.append({"file": name + ".csv", "delta": delta, "k": k,
                        "gap_l1": run.gap_l1, "bound": 4 * j * delta,
                        "max_gap": max(run.gap_l1), "violations": bad})
    files.append(_write(out, "gaps.json", json.dumps(summary, indent=2)))
    return ok, files


def cmd_separating(cfg: dict, out: Path):
    u = initial_profile(cfg)
    lo, hi = cfg["level_range"] or (None, 10)
    files = []
    try:
        se = separating_element(u, cfg["t"], cfg["j"], cfg["tol"], max_levels=hi, min_level=lo)
        ok = True
    except ConvergenceError as exc:
        se, ok = exc.best, False
        if se is None:
            raise
    files.append(_write(out, "separating_profile.csv", se.profile.to_csv()))
    files.append(_write(out, "certificate.json", se.certificate_json()))
    return ok, files


def cmd_quasi(cfg: dict, out: Path):
    u = initial_profile(cfg)
    files, ok, rows = [], True, []
    for eps in cfg["eps_list"]:
        qs = build_quasi_solution(u, cfg["T"], eps, cfg["j"], steps_per_slice=cfg["steps"])
        tag = f"eps{eps:g}"
        files.append(_write(out, f"edge_{tag}.csv", qs.edge.to_csv()))
        files.append(_write(out, f"snapshots_{tag}.csv", qs.snapshots_csv()))
        files.append(_write(out, f"quasi_{tag}.json", qs.manifest_json()))
        ok &= qs.max_drift <= eps
        rows.append(qs.manifest())
    files.append(_write(out, "quasi_summary.json", json.dumps(rows, indent=2)))
    return ok, files


def cmd_validate(cfg: dict, out: Path):
    u = initial_profile(cfg)
    j, delta, eps_list = cfg["j"], cfg["delta"], sorted(cfg["eps_list"], reverse=True)
    runs = []
    for eps in eps_list:
        qs = build_quasi_solution(u, cfg["T"], eps, j, steps_per_slice=cfg["steps"])
        rep = sandwich_check(qs, delta, cfg["c_margin"])
        tstar = qs.edge.times[1]
        edge = EdgePath.linear(qs.edge.positions[0], qs.velocities[0], tstar)
        mc = mc_mass_loss(u, edge, tstar, j, McConfig(cfg["paths"], cfg["dt"], cfg["seed"]))
        runs.append({
            "epsilon": eps, "max_drift": qs.max_drift, "drift_ok": qs.max_drift <= eps,
            "sandwich": rep.to_dict(), "max_margin": float(rep.margins.max()),
            "mc_first_slice": {"estimate": mc.estimate, "std_error": mc.std_error,
                               "target": j * tstar,
                               "ok": abs(mc.estimate - j * tstar) <= 3 * mc.std_error + 1e-12},
        })
    margins = [r["max_margin"] for r in runs]
    shrinking = all(b <= 0.5 * a + 1e-10 for a, b in zip(margins, margins[1:]))
    ok = (shrinking and all(r["drift_ok"] and r["sandwich"]["passed"] and r["mc_first_slice"]["ok"]
                            for r in runs))
    verdict = {"passed": ok, "margins_shrink_linearly": shrinking,
               "fitted_c": max(r["sandwich"]["empirical_c"] for r in runs), "runs": runs}
    return ok, [_write(out, "verdict.json", json.dumps(verdict, indent=2))]


def cmd_stationary_check(cfg: dict, out: Path):
    a, j, h = cfg["a"], cfg["j"], cfg["grid_h"]
    u = stationary_profile(a, j, h)
    lo, hi = cfg["level_range"] or (None, 8)
    se = separating_element(u, cfg["t"], j, cfg["tol"], max_levels=hi, min_level=lo)
    F = se.profile.F()
    err = float(np.max(np.abs(F - stationary_tail(a, j, se.profile.breakpoints))))
    report = {"a": a, "j": j, "t": cfg["t"], "sup_error": err,
              "certified_gap": se.certified_gap, "levels_used": se.levels_used,
              "passed": err <= cfg["tol"]}
    return report["passed"], [_write(out, "stationary_check.json", json.dumps(report, indent=2))]


COMMANDS = {"barriers": cmd_barriers, "separating": cmd_separating, "quasi": cmd_quasi,
            "validate": cmd_validate, "stationary-check": cmd_stationary_check}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        cfg = _resolve(args)
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        ok, files = COMMANDS[args.command](cfg, out)
    except UsageError as exc:
        print(f"fbpbarrier: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        if isinstance(exc, FbpError):
            print(f"fbpbarrier: invariant violation: {exc}", file=sys.stderr)
            return EXIT_VIOLATION
        print(f"fbpbarrier: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except FbpError as exc:
        print(f"fbpbarrier: invariant violation: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    status = "ok" if ok else "violation"
    _manifest(out, cfg, files, status)
    print(f"{args.command}: {status}; wrote {len(files)} file(s) to {out}")
    return EXIT_OK if ok else EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
