"""Experiment runner: sweeps over mesh sizes, preconditioners, alpha_P and
frame axis modes, writing per-step and summary CSV files plus optional VTK
snapshots.  Plot rendering stays out of scope; the CSVs are ready for
gnuplot or a spreadsheet.

Exit codes: 0 success, 2 configuration error, 3 solver failure (partial
outputs are kept).
"""

import argparse
import itertools
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .diagnostics import (CheckReport, check_bounded_ratio, check_inverse_bounds,
                          check_mapping_identities, energy_norm)
from .mesh import MeshError, generate_structured_cube, mesh_quality
from .precond import PRECONDITIONER_KINDS
from .scheme import (ConfigError, SimulationConfig, SolverFailure,
                     run_simulation)
from .tangent import FIXED_INVOLUTIONS, build_frame, select_tn_adaptive

SUMMARY_HEADER = ("h,k,precond,alpha,alpha_p,tn_mode,"
                  "avg_iterations,max_iterations,steps,wall_time_s")

DEFAULT_CONFIG = {
    "scheme": "tps1",
    "alpha": 0.5,
    "theta": 1.0,
    "ell_ex2": 10.0,
    "T": 0.05,
    "k": 0.01,
    "projection": True,
    "mesh": {"kind": "cube", "bounds": [[0, 1], [0, 1], [0, 1]], "n": [2, 2, 2]},
    "field": {
        "pi": {"kind": "zero"},
        "applied": {"kind": "academic"},
        "m0": {"kind": "constant", "value": [1.0, 0.0, 0.0]},
    },
    "solver": {"tol": 1e-14, "restart": 200, "maxit": 100000,
               "reorthogonalize": False},
    "precond": {"kind": "stationary", "alpha_p": 1.0, "rebuild_every": 1},
    "frame": {"tn": "adaptive", "strategy": "householder"},
    "output": {"snapshot_every": 0, "residual_csv": False},
}


def print_config_schema(out=None):
    """Emit the config schema with defaults; the defaults parse back."""
    out = out if out is not None else sys.stdout
    schema = {
        "description": "simulation config; optional top-level 'sweep' object "
                       "with axes over mesh configs, preconditioners, alpha_p "
                       "values and tn modes",
        "enums": {
            "scheme": ["tps1", "tps2"],
            "precond.kind": list(PRECONDITIONER_KINDS),
            "frame.tn": ["adaptive"] + sorted(FIXED_INVOLUTIONS),
            "frame.strategy": ["householder", "signflip", "rotation"],
            "field.pi.kind": ["zero", "uniaxial", "zhang_li"],
            "field.applied.kind": ["constant", "academic"],
            "field.m0.kind": ["constant", "spiral"],
        },
        "sweep": {"mesh": "[mesh configs]", "precond": "[kinds]",
                  "alpha_p": "[floats]", "tn": "[modes]"},
        "defaults": DEFAULT_CONFIG,
    }
    json.dump(schema, out, indent=2)
    out.write("\n")


def _sweep_points(doc):
    """Cartesian product over the sweep axes, in deterministic order."""
    sweep = doc.get("sweep", {})
    known = {"mesh", "precond", "alpha_p", "tn"}
    unknown = set(sweep) - known
    if unknown:
        raise ConfigError(f"unknown sweep axes: {sorted(unknown)}")
    for axis in known & set(sweep):
        if not isinstance(sweep[axis], list) or not sweep[axis]:
            raise ConfigError(f"sweep axis {axis!r} must be a non-empty list")
    meshes = sweep.get("mesh", [doc.get("mesh", DEFAULT_CONFIG["mesh"])])
    preconds = sweep.get("precond",
                         [doc.get("precond", DEFAULT_CONFIG["precond"]).get("kind", "stationary")])
    alpha_ps = sweep.get("alpha_p",
                         [doc.get("precond", DEFAULT_CONFIG["precond"]).get("alpha_p", 1.0)])
    tns = sweep.get("tn", [doc.get("frame", DEFAULT_CONFIG["frame"]).get("tn", "adaptive")])
    return list(itertools.product(meshes, preconds, alpha_ps, tns))


def _point_config(doc, mesh_cfg, pkind, alpha_p, tn):
    point = {k: v for k, v in doc.items() if k != "sweep"}
    point["mesh"] = mesh_cfg
    point["precond"] = dict(point.get("precond", {}))
    point["precond"]["kind"] = pkind
    point["precond"]["alpha_p"] = alpha_p
    point["frame"] = dict(point.get("frame", {}))
    point["frame"]["tn"] = tn
    return SimulationConfig.from_dict(point)


def _fmt(v):
    return repr(float(v))


def run_experiment(config_path, out_dir=None, overrides=None):
    """Run every sweep point; returns process exit code."""
    try:
        with open(config_path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if overrides:
        doc = _apply_overrides(doc, overrides)
    out_dir = out_dir or doc.get("output", {}).get("dir") or "out"

    try:
        points = _sweep_points(doc)
        configs = [_point_config(doc, *point) for point in points]
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    os.makedirs(out_dir, exist_ok=True)
    summary_path = os.path.join(out_dir, "summary.csv")
    code = 0
    with open(summary_path, "w", encoding="utf-8") as summary:
        summary.write(SUMMARY_HEADER + "\n")
        for idx, cfg in enumerate(configs):
            pkind = cfg.precond["kind"]
            alpha_p = cfg.precond["alpha_p"]
            tn = cfg.frame["tn"]
            base = f"steps_{idx:03d}_{pkind}_ap{alpha_p:g}_{tn.replace('+', 'p').replace('-', 'm')}"
            cfg.output = dict(cfg.output)
            cfg.output["dir"] = out_dir
            cfg.output["basename"] = base
            started = time.perf_counter()
            try:
                mesh = cfg.build_mesh()
                h = mesh_quality(mesh).h
                result = run_simulation(cfg, mesh=mesh)
            except SolverFailure as exc:
                print(f"solver failure on sweep point {idx} ({pkind}): {exc}",
                      file=sys.stderr)
                code = 3
                continue
            except (ConfigError, MeshError, OSError) as exc:
                print(f"config error on sweep point {idx}: {exc}", file=sys.stderr)
                return 2
            wall = time.perf_counter() - started
            summary.write(",".join([
                _fmt(h), _fmt(cfg.k), pkind, _fmt(cfg.alpha), _fmt(alpha_p), tn,
                _fmt(result.average_iterations()), str(result.max_iterations()),
                str(len(result.records)), _fmt(wall),
            ]) + "\n")
            summary.flush()
            print(f"[{idx + 1}/{len(configs)}] {pkind:12s} alpha_p={alpha_p:<8g} "
                  f"tn={tn:8s} h={h:.4g} avg_it={result.average_iterations():.1f}")
    return code


def _apply_overrides(doc, overrides):
    doc = json.loads(json.dumps(doc))  # deep copy
    for dotted, value in overrides.items():
        parts = dotted.split(".")
        target = doc
        for p in parts[:-1]:
            target = target.setdefault(p, {})
        target[parts[-1]] = value
    return doc


def run_checks(out=None):
    """Self-contained diagnostics pass; prints one JSON report per check."""
    out = out if out is not None else sys.stdout
    rng = np.random.default_rng(7)
    mesh = generate_structured_cube([[0, 1], [0, 1], [0, 1]], (2, 2, 2))
    m = rng.standard_normal((mesh.N, 3))
    m /= np.linalg.norm(m, axis=1)[:, None]
    selection = select_tn_adaptive(m)
    frame = build_frame(m, selection.chosen_T)

    reports = [check_mapping_identities(frame, m)]
    reports.append(check_bounded_ratio(mesh, m))

    from .fem import assemble_mass, assemble_stiffness
    mass, stiffness = assemble_mass(mesh), assemble_stiffness(mesh)
    worst = 0.0
    for _ in range(5):
        x = rng.standard_normal(2 * mesh.N)
        a, b = energy_norm(mass, stiffness, frame, 1.0, 0.1, x, mesh=mesh)
        worst = max(worst, abs(a - b) / max(a, 1e-300))
    reports.append(CheckReport("energy_norm_dual_route", worst, 1e-12, worst <= 1e-12))

    dim = 12
    for trial in range(3):
        g = rng.standard_normal((dim, dim))
        b0 = g @ g.T + dim * np.eye(dim)
        skew = rng.standard_normal((dim, dim))
        b = b0 + 0.5 * (skew - skew.T)
        reports.append(check_inverse_bounds(b, b0, n_pairs=30, seed=trial))

    ok = True
    for rep in reports:
        out.write(json.dumps(rep.to_dict()) + "\n")
        ok = ok and rep.passed
    return 0 if ok else 1


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="tangent-plane-llg",
        description="Tangent plane LLG solver and preconditioner experiments")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config", help="JSON config path")
    p_run.add_argument("--out", help="output directory (default: config output.dir or ./out)")
    p_run.add_argument("--precond", choices=PRECONDITIONER_KINDS)
    p_run.add_argument("--alpha-p", type=float, dest="alpha_p")
    p_run.add_argument("--precond-rebuild-every", type=int, dest="rebuild_every")
    p_run.add_argument("--tn", choices=["adaptive"] + sorted(FIXED_INVOLUTIONS))
    p_run.add_argument("--frame", choices=["householder", "signflip", "rotation"])
    p_run.add_argument("--tol", type=float)
    p_run.add_argument("--restart", type=int)
    p_run.add_argument("--maxit", type=int)
    p_run.add_argument("--no-projection", action="store_true")

    sub.add_parser("schema", help="print the config schema with defaults")
    sub.add_parser("check", help="run the diagnostics suite")

    args = parser.parse_args(argv)

    if args.command == "schema":
        print_config_schema()
        return 0
    if args.command == "check":
        return run_checks()

    overrides = {}
    if args.precond:
        overrides["precond.kind"] = args.precond
    if args.alpha_p is not None:
        overrides["precond.alpha_p"] = args.alpha_p
    if args.rebuild_every is not None:
        overrides["precond.rebuild_every"] = args.rebuild_every
    if args.tn:
        overrides["frame.tn"] = args.tn
    if args.frame:
        overrides["frame.strategy"] = args.frame
    if args.tol is not None:
        overrides["solver.tol"] = args.tol
    if args.restart is not None:
        overrides["solver.restart"] = args.restart
    if args.maxit is not None:
        overrides["solver.maxit"] = args.maxit
    if args.no_projection:
        overrides["projection"] = False
    return run_experiment(args.config, out_dir=args.out, overrides=overrides)


if __name__ == "__main__":
    sys.exit(main())
