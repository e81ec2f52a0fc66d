"""Command-line driver: parameterize, compare, register.

Exit codes: 0 success, 1 usage error, 2 I/O or parse failure, 3 mesh
validation failure, 4 numerical failure.  The env var AUTHALIC_THREADS caps
BLAS/OpenMP parallelism; it must be honored before numpy loads, which is why
the environment handling sits above the imports.
"""

from __future__ import annotations

import os

if os.environ.get("AUTHALIC_THREADS"):
    _n = os.environ["AUTHALIC_THREADS"]
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                 "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(_var, _n)

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .aem import LineSearchConfig, aem_run, trace_to_csv, trace_to_jsonl
from .energy import image_area_polar, normalized_authalic_energy, stretch_energy
from .errors import (
    DegenerateMapError,
    FactorizationError,
    MeshLoadError,
    MeshValidationError,
    NotDescentError,
)
from .mesh import load_mesh, write_mesh
from .metrics import report as distortion_report
from .registration import homotopy_frames, load_landmarks, register_surfaces
from .sem import sem_run

EXIT_USAGE = 1
EXIT_IO = 2
EXIT_VALIDATION = 3
EXIT_NUMERIC = 4

HOMOTOPY_SCHEDULE = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)

# Shape of the JSON summaries written by `parameterize` (and per algorithm
# by `compare`); kept as a JSON-schema document so scripts can validate.
SUMMARY_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["command", "mesh", "algorithm", "iterations", "seed",
                 "energy", "area_ratios", "folding_count", "wall_time_s"],
    "properties": {
        "command": {"type": "string"},
        "mesh": {
            "type": "object",
            "required": ["path", "vertices", "faces", "boundary_vertices", "total_area"],
            "properties": {
                "path": {"type": "string"},
                "vertices": {"type": "integer", "minimum": 1},
                "faces": {"type": "integer", "minimum": 1},
                "boundary_vertices": {"type": "integer", "minimum": 3},
                "total_area": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "algorithm": {"enum": ["aem", "sem"]},
        "iterations": {"type": "integer", "minimum": 1},
        "line_search": {"enum": ["quadratic", "wolfe", None]},
        "seed": {"type": "integer"},
        "energy": {
            "type": "object",
            "required": ["stretch", "authalic", "image_area"],
            "properties": {
                "stretch": {"type": "number"},
                "authalic": {"type": "number"},
                "image_area": {"type": "number"},
            },
        },
        "area_ratios": {
            "type": "object",
            "required": ["mean", "sd", "sd_raw"],
            "properties": {
                "mean": {"type": "number"},
                "sd": {"type": "number"},
                "sd_raw": {"type": "number"},
            },
        },
        "folding_count": {"type": "integer", "minimum": 0},
        "wall_time_s": {"type": "number", "minimum": 0},
        "converged": {"type": "boolean"},
    },
}


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on syntax errors; the exit-code taxonomy reserves 2
    # for I/O, so usage problems exit 1 instead.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_solver_flags(p):
    p.add_argument("--alg", choices=("aem", "sem"), default="aem")
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--line-search", choices=("quadratic", "wolfe"), default="quadratic")
    p.add_argument("--c1", type=float, default=1e-4)
    p.add_argument("--c2", type=float, default=0.4)
    p.add_argument("--alpha0", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report-dir", type=Path, default=None)
    p.add_argument("--format", choices=("off", "obj"), default=None,
                   help="input format override (default: by extension)")


def build_parser():
    parser = _Parser(prog="authalic",
                     description="Area-preserving disk parameterization of "
                                 "simply connected open triangle meshes")
    parser.add_argument("--version", action="version", version=f"authalic {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parameterize", help="map one mesh onto the unit disk")
    _add_solver_flags(p)
    p.add_argument("input", type=Path)
    p.add_argument("output", type=Path, help="output OBJ with disk uv coordinates")

    c = sub.add_parser("compare", help="run AEM and SEM with identical budgets")
    _add_solver_flags(c)
    c.add_argument("input", type=Path)

    r = sub.add_parser("register", help="landmark registration between two meshes")
    _add_solver_flags(r)
    r.add_argument("--lambda", dest="lam", type=float, default=1e4,
                   help="landmark penalty weight")
    r.add_argument("source", type=Path)
    r.add_argument("target", type=Path)
    r.add_argument("landmarks", type=Path)
    r.add_argument("outdir", type=Path)
    return parser


def _check_usage(args):
    if args.iters < 1:
        raise UsageError(f"--iters must be >= 1, got {args.iters}")
    try:
        return LineSearchConfig(mode=args.line_search, c1=args.c1, c2=args.c2,
                                alpha0=args.alpha0)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


class UsageError(Exception):
    pass


def _solve(mesh, alg, iters, config):
    """Run one algorithm; returns (DiskMap, trace rows or records, seconds)."""
    t0 = time.perf_counter()
    if alg == "aem":
        result = aem_run(mesh, config=config, max_iters=iters, grad_tol=float("inf"))
        elapsed = time.perf_counter() - t0
        return result.map, result.trace, elapsed, result.converged
    dmap, trace = sem_run(mesh, iters, update_boundary=True)
    elapsed = time.perf_counter() - t0
    return dmap, trace, elapsed, False


def _summary(command, args, mesh, dmap, alg, elapsed, converged):
    rep = distortion_report(mesh, dmap)
    return {
        "command": command,
        "mesh": {
            "path": str(args.input if hasattr(args, "input") else args.source),
            "vertices": mesh.n_vertices,
            "faces": mesh.n_faces,
            "boundary_vertices": int(len(mesh.boundary_loop)),
            "total_area": mesh.total_area,
        },
        "algorithm": alg,
        "iterations": args.iters,
        "line_search": args.line_search if alg == "aem" else None,
        "seed": args.seed,
        "energy": {
            "stretch": stretch_energy(mesh, dmap),
            "authalic": normalized_authalic_energy(mesh, dmap),
            "image_area": image_area_polar(dmap.boundary_theta),
        },
        "area_ratios": {
            "mean": rep.mean_ratio,
            "sd": rep.sd_ratio,
            "sd_raw": rep.sd_ratio_raw,
        },
        "folding_count": rep.folding_count,
        "wall_time_s": elapsed,
        "converged": converged,
    }, rep


def _report_dir(args, default_parent):
    d = args.report_dir if args.report_dir is not None else default_parent
    d.mkdir(parents=True, exist_ok=True)
    return d


def cmd_parameterize(args):
    config = _check_usage(args)
    mesh = load_mesh(args.input, fmt=args.format)
    dmap, trace, elapsed, converged = _solve(mesh, args.alg, args.iters, config)
    summary, _ = _summary("parameterize", args, mesh, dmap, args.alg, elapsed, converged)

    write_mesh(args.output, mesh, fmt="obj", uv=dmap.coords())
    rdir = _report_dir(args, args.output.parent)
    stem = args.output.stem
    with open(rdir / f"{stem}.summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    if args.alg == "aem":
        trace_to_csv(trace, rdir / f"{stem}.trace.csv")
        trace_to_jsonl(trace, rdir / f"{stem}.trace.jsonl")
    else:
        _sem_trace_csv(trace, rdir / f"{stem}.trace.csv")
    print(f"wrote {args.output} (authalic energy {summary['energy']['authalic']:.3e}, "
          f"foldings {summary['folding_count']}, {elapsed:.2f}s)")
    return 0


def _sem_trace_csv(trace, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "stretch", "authalic", "image_area"])
        for rec in trace:
            writer.writerow([rec.iteration, repr(rec.stretch), repr(rec.authalic),
                             repr(rec.image_area)])


def cmd_compare(args):
    config = _check_usage(args)
    mesh = load_mesh(args.input, fmt=args.format)
    rows = []
    for alg in ("aem", "sem"):
        dmap, _, elapsed, converged = _solve(mesh, alg, args.iters, config)
        summary, rep = _summary("compare", args, mesh, dmap, alg, elapsed, converged)
        rows.append({
            "algorithm": alg,
            "sd_ratio": rep.sd_ratio,
            "authalic_energy": summary["energy"]["authalic"],
            "time_s": elapsed,
            "foldings": rep.folding_count,
        })

    rdir = _report_dir(args, args.input.parent)
    stem = args.input.stem
    with open(rdir / f"{stem}.compare.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v)
                             for k, v in row.items()})

    header = f"{'algorithm':>10} {'SD(ratio)':>12} {'authalic':>12} {'time(s)':>9} {'foldings':>9}"
    lines = [header, "-" * len(header)]
    for row in rows:
        lines.append(f"{row['algorithm']:>10} {row['sd_ratio']:>12.4e} "
                     f"{row['authalic_energy']:>12.4e} {row['time_s']:>9.2f} "
                     f"{row['foldings']:>9d}")
    table = "\n".join(lines)
    with open(rdir / f"{stem}.compare.txt", "w", encoding="utf-8") as fh:
        fh.write(table + "\n")
    print(table)
    return 0


def cmd_register(args):
    config = _check_usage(args)
    if args.lam < 0:
        raise UsageError("--lambda must be >= 0")
    mesh_s = load_mesh(args.source, fmt=args.format)
    mesh_t = load_mesh(args.target, fmt=args.format)
    landmarks = load_landmarks(args.landmarks)
    if landmarks.source.max() >= mesh_s.n_vertices or \
            landmarks.target.max() >= mesh_t.n_vertices:
        raise MeshValidationError("landmark index out of range for its mesh")

    t0 = time.perf_counter()
    f = aem_run(mesh_s, config=config, max_iters=args.iters, grad_tol=float("inf")).map
    g = aem_run(mesh_t, config=config, max_iters=args.iters, grad_tol=float("inf")).map
    result = register_surfaces(mesh_s, f, mesh_t, g, landmarks, args.lam,
                               max_iters=args.iters, config=config)
    elapsed = time.perf_counter() - t0

    args.outdir.mkdir(parents=True, exist_ok=True)
    write_mesh(args.outdir / "registration_map.obj", mesh_s, fmt="obj",
               uv=result.map.coords)
    _write_points_obj(args.outdir / "composed_surface.obj", result.composed, mesh_s.faces)
    for t, frame in zip(HOMOTOPY_SCHEDULE,
                        homotopy_frames(mesh_s, result.composed, HOMOTOPY_SCHEDULE)):
        _write_points_obj(args.outdir / f"homotopy_t{t:.1f}.obj", frame, mesh_s.faces)
    trace_to_csv(result.trace, args.outdir / "registration.trace.csv")

    per_lm = np.linalg.norm(
        result.map.coords[landmarks.source] - g.coords()[landmarks.target], axis=1)
    angle = float(np.arctan2(result.rotation[1, 0], result.rotation[0, 0]))
    report = {
        "command": "register",
        "source": str(args.source),
        "target": str(args.target),
        "landmarks": int(len(landmarks)),
        "lambda": args.lam,
        "rotation_radians": angle,
        "landmark_rms": result.map.landmark_rms,
        "landmark_mean_error": float(per_lm.mean()),
        "landmark_max_error": float(per_lm.max()),
        "initial_rms": result.initial_rms,
        "flagged_vertices": len(result.flagged),
        "wall_time_s": elapsed,
    }
    with open(args.outdir / "landmarks.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    print(f"registered {args.source} -> {args.target}: landmark rms "
          f"{result.map.landmark_rms:.3e}, rotation {np.degrees(angle):.2f} deg, "
          f"{elapsed:.2f}s")
    return 0


def _write_points_obj(path, points, faces):
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in points]
    lines += [f"f {a+1} {b+1} {c+1}" for a, b, c in faces]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    np.random.seed(args.seed % (2**32))  # none of the solvers draw, but keep runs pinned
    handlers = {
        "parameterize": cmd_parameterize,
        "compare": cmd_compare,
        "register": cmd_register,
    }
    try:
        return handlers[args.command](args)
    except UsageError as exc:
        print(f"authalic: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MeshLoadError, OSError) as exc:
        print(f"authalic: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except MeshValidationError as exc:
        print(f"authalic: validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FactorizationError, DegenerateMapError, NotDescentError) as exc:
        print(f"authalic: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
