"""Command-line interface.

Subcommands: solve, derivative, verify, optimize, wulff.  Every run
writes its resolved configuration next to its outputs so results are
reproducible from the emitted files alone.

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 solver
or meshing error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from .anisotropy import ModelError, parse_model, wulff_area
from .eigensolver import SolverError, SolverOpts, solve_first
from .mesh import MeshError, Wulff, generate, parse_shape, write_fmesh
from .optimize import FlowOpts, flow
from .shapecalc import derivative_report, parse_field
from .verify import SUITES, run_suite

USAGE_ERROR, CHECK_FAILURE, SOLVER_ERROR = 2, 1, 3


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="finslereig",
        description="First eigenpair of the Finsler p-Laplacian on 2D domains, "
                    "its shape derivatives, and the identity verification suite.",
    )
    parser.add_argument("--config", help="JSON file whose keys mirror flags")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, shape=True):
        sp.add_argument("--model", default="euclidean",
                        help="euclidean | ellipse:a11,a12,a22 | lq:q | reg:<base>:eps")
        sp.add_argument("--p", type=float, default=2.0, help="exponent p > 1")
        if shape:
            sp.add_argument("--shape", default="disk:1",
                            help="disk:r | square:side | ellipse:a,b | wulff:scale | "
                                 "polygon:x1,y1,...")
            sp.add_argument("--h", type=float, default=0.05, help="target edge length")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--tol", type=float, default=1e-10, help="eigenvalue tolerance")
        sp.add_argument("--max-iter", type=int, default=10000)
        sp.add_argument("--eps-schedule", default="1e-2,1e-4,1e-8,0",
                        help="comma-separated smoothing continuation values")
        sp.add_argument("--method", choices=["inverse-power", "rayleigh-descent"],
                        default="inverse-power")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=0,
                        help="cap BLAS worker threads (0 = leave unchanged)")

    sp = sub.add_parser("solve", help="solve the first eigenpair on a shape")
    common(sp)

    sp = sub.add_parser("derivative", help="shape derivative of the eigenvalue")
    common(sp)
    sp.add_argument("--field", default="identity",
                    help="identity | translate:dx,dy | bump:cx,cy,r,amp | nodal:file.csv")
    sp.add_argument("--fd-step", type=float, default=None)
    sp.add_argument("--forms", default="all",
                    help="comma list from volume,hadamard,fd or 'all'")

    sp = sub.add_parser("verify", help="run identity verification suites")
    common(sp, shape=False)
    sp.add_argument("--suite", default="all",
                    choices=["all"] + sorted(SUITES))
    sp.add_argument("--levels", type=int, default=3, help="refinement levels")

    sp = sub.add_parser("optimize", help="volume-constrained shape descent")
    common(sp)
    sp.add_argument("--step0", type=float, default=0.05)
    sp.add_argument("--tol-geo", type=float, default=1e-3)
    sp.add_argument("--flow-max-iter", type=int, default=100)
    sp.add_argument("--snapshot-every", type=int, default=0,
                    help="write .fmesh/.csv snapshots every k iterations")

    sp = sub.add_parser("wulff", help="mesh the Wulff shape of a model")
    sp.add_argument("--model", default="euclidean")
    sp.add_argument("--n", type=int, default=256, help="boundary vertex count")
    sp.add_argument("--scale", type=float, default=1.0)
    sp.add_argument("--out", default="wulff.fmesh", help="output .fmesh path")
    return parser


def _solver_opts(args):
    schedule = tuple(float(x) for x in args.eps_schedule.split(","))
    return SolverOpts(tol=args.tol, max_iter=args.max_iter, eps_schedule=schedule,
                      method=args.method, seed=args.seed)


def _outdir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_config(out: Path, args):
    resolved = {k: v for k, v in vars(args).items() if k != "config"}
    with open(out / "config.json", "w") as f:
        json.dump(resolved, f, indent=2, sort_keys=True, default=str)


def _write_u_csv(path, mesh, u):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["x", "y", "u"])
        for (x, y), val in zip(mesh.vertices, u):
            w.writerow([f"{x:.17g}", f"{y:.17g}", f"{val:.17g}"])


def _cmd_solve(args):
    model = parse_model(args.model)
    mesh = generate(parse_shape(args.shape, model), args.h)
    t0 = time.perf_counter()
    pair = solve_first(mesh, model, args.p, _solver_opts(args))
    out = _outdir(args)
    _write_config(out, args)
    result = {
        "lambda": pair.lam,
        "p": args.p,
        "model": args.model,
        "shape": args.shape,
        "h_target": args.h,
        "h_max_edge": mesh.h,
        "n_vertices": mesh.n_vertices,
        "n_triangles": mesh.n_triangles,
        "area": mesh.area,
        "residual": pair.residual,
        "runtime_s": time.perf_counter() - t0,
    }
    with open(out / "result.json", "w") as f:
        json.dump(result, f, indent=2)
    write_fmesh(mesh, out / "mesh.fmesh")
    _write_u_csv(out / "u.csv", mesh, pair.u)
    print(json.dumps(result, indent=2))
    return 0


def _cmd_derivative(args):
    model = parse_model(args.model)
    mesh = generate(parse_shape(args.shape, model), args.h)
    field = parse_field(args.field, mesh)
    forms = ("volume", "hadamard", "fd") if args.forms == "all" else tuple(
        args.forms.split(","))
    opts = _solver_opts(args)
    if opts.tol > 1e-12:
        opts.tol = 1e-13  # fd differences need tightly converged eigenvalues
    pair = solve_first(mesh, model, args.p, opts)
    report = derivative_report(mesh, pair, model, args.p, field,
                               fd_step=args.fd_step, forms=forms, opts=opts)
    out = _outdir(args)
    _write_config(out, args)
    payload = {"lambda": pair.lam, **report.to_dict()}
    with open(out / "derivative.json", "w") as f:
        json.dump(payload, f, indent=2)
    print(json.dumps(payload, indent=2))
    return 0


def _cmd_verify(args):
    model = parse_model(args.model)
    results = run_suite(args.suite, model, args.p, levels=args.levels,
                        opts=SolverOpts(tol=min(args.tol, 1e-12)))
    out = _outdir(args)
    _write_config(out, args)
    for res in results:
        print(res.table())
    report = {
        "suite": args.suite,
        "model": args.model,
        "p": args.p,
        "checks": [r.to_dict() for r in results],
        "all_passed": all(r.verdict for r in results),
    }
    with open(out / "report.json", "w") as f:
        json.dump(report, f, indent=2)
    n_fail = sum(not r.verdict for r in results)
    print(f"{len(results) - n_fail}/{len(results)} checks passed")
    return 0 if n_fail == 0 else CHECK_FAILURE


def _cmd_optimize(args):
    model = parse_model(args.model)
    out = _outdir(args)
    _write_config(out, args)

    def snapshot(it, mesh, pair):
        write_fmesh(mesh, out / f"mesh_{it:04d}.fmesh")
        _write_u_csv(out / f"u_{it:04d}.csv", mesh, pair.u)

    fopts = FlowOpts(
        step0=args.step0, tol_geo=args.tol_geo, max_iter=args.flow_max_iter,
        h=args.h, solver=_solver_opts(args),
        snapshot_every=args.snapshot_every,
        snapshot_cb=snapshot if args.snapshot_every else None,
    )
    state = flow(parse_shape(args.shape, model), model, args.p, fopts)
    with open(out / "history.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iter", "lambda", "volume", "deficit", "step"])
        for rec in state.history:
            w.writerow([rec.iteration, f"{rec.lam:.17g}", f"{rec.volume:.17g}",
                        f"{rec.deficit:.17g}", f"{rec.step:.17g}"])
    write_fmesh(state.mesh, out / "mesh.fmesh")
    print(f"{state.message}; final lambda {state.lam:.8g}, deficit "
          f"{state.history[-1].deficit:+.4f} after {state.iteration} iterations")
    return 0


def _cmd_wulff(args):
    model = parse_model(args.model)
    perimeter = 0.0
    poly = None
    # boundary vertex count n corresponds to target h = 2 * perimeter / n
    from .anisotropy import wulff_polygon

    poly = wulff_polygon(model, 4096) * args.scale
    closed = np.vstack([poly, poly[:1]])
    perimeter = float(np.linalg.norm(np.diff(closed, axis=0), axis=1).sum())
    h = 2.0 * perimeter / args.n
    mesh = generate(Wulff(model, args.scale), h)
    out = Path(args.out)
    if out.parent != Path("."):
        out.parent.mkdir(parents=True, exist_ok=True)
    write_fmesh(mesh, out)
    print(f"wrote {out}: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles, "
          f"area {mesh.area:.8g} (analytic {wulff_area(model, 4096) * args.scale**2:.8g})")
    return 0


_COMMANDS = {
    "solve": _cmd_solve,
    "derivative": _cmd_derivative,
    "verify": _cmd_verify,
    "optimize": _cmd_optimize,
    "wulff": _cmd_wulff,
}


def main(argv=None) -> int:
    parser = _build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    # --config supplies values for flags not given explicitly
    if args.config:
        try:
            with open(args.config) as f:
                cfg = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read config {args.config}: {exc}", file=sys.stderr)
            return USAGE_ERROR
        for key, value in cfg.items():
            attr = key.replace("-", "_")
            if f"--{key.replace('_', '-')}" in argv:
                continue
            if not hasattr(args, attr):
                print(f"error: config key {key!r} matches no flag", file=sys.stderr)
                return USAGE_ERROR
            setattr(args, attr, value)
    if getattr(args, "threads", 0):
        try:
            from threadpoolctl import threadpool_limits
            threadpool_limits(limits=args.threads)
        except ImportError:
            print("threadpoolctl not available; --threads ignored", file=sys.stderr)
    try:
        return _COMMANDS[args.command](args)
    except (ModelError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (MeshError, SolverError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return SOLVER_ERROR


if __name__ == "__main__":
    sys.exit(main())
