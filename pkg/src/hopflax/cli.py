"""Command-line interface.

Subcommands::

    hopflax mesh-gen          write a disc mesh in Triangle format
    hopflax solve-evolutive   march a time-dependent problem to its final time
    hopflax solve-stationary  solve a discounted stationary problem
    hopflax convergence       tabulate errors and EOCs over mesh levels

The default thread count comes from ``HOPFLAX_THREADS`` (else the number
of cores); ``--threads`` overrides it. Results do not depend on it.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import set_threads
from .analysis import (
    MESH_JITTER, MESH_SEED, STATIONARY_DT_RULES, ConvergenceAborted, SolverOptions, disc_level_mesh,
    exact_solution, get_test_case, qualitative_checks, relative_errors, rows_to_csv,
    run_convergence, write_gnuplot,
)
from .evolutive import EvolutiveConfig, run_evolutive
from .export import write_policy, write_vtk, write_xyz
from .hamiltonian import ConjugateHamiltonian
from .mesh import (
    Mesh, MeshError, build_seed_table, disc_mesh_for_dx, gen_disc_mesh, load_triangle_mesh,
    write_triangle_mesh,
)
from .stationary import (
    RECTANGULAR, TRAPEZOIDAL, ConvergenceError, StationaryProblem, modified_policy_iteration,
    policy_iteration, value_iteration,
)

logger = logging.getLogger("hopflax")

QUAD_NAMES = {"rect": RECTANGULAR, "rectangular": RECTANGULAR,
              "trap": TRAPEZOIDAL, "trapezoidal": TRAPEZOIDAL}


class UsageError(Exception):
    """Bad or conflicting command-line input."""


# --------------------------------------------------------------------------
# named functions for custom problems
# --------------------------------------------------------------------------


def _r2(x, cx=0.0, cy=0.0):
    return (x[:, 0] - cx) ** 2 + (x[:, 1] - cy) ** 2


FUNCTIONS = {
    # name: (number of parameters allowed, builder)
    "zero": ((0,), lambda: lambda x: np.zeros(len(x))),
    "const": ((1,), lambda c: lambda x: np.full(len(x), c)),
    "norm": ((0, 2), lambda cx=0.0, cy=0.0: lambda x: np.sqrt(_r2(x, cx, cy))),
    "quadratic": ((0, 1, 3), lambda a=1.0, cx=0.0, cy=0.0: lambda x: 0.5 * a * _r2(x, cx, cy)),
    "capped": ((0, 1), lambda r=1.0: lambda x: np.minimum(_r2(x) - r * r, 0.0)),
    "double-well": ((0, 1, 2), lambda a=1.0, d=1.0: lambda x: 0.5 * a * np.minimum(
        _r2(x, d, 0.0), _r2(x, -d, 0.0))),
}


def parse_function(text: str):
    """``name[:p1,p2,...]`` from :data:`FUNCTIONS`, e.g. ``quadratic:2``."""
    name, _, params = text.partition(":")
    if name not in FUNCTIONS:
        raise UsageError(f"unknown function {name!r}; choose from {', '.join(FUNCTIONS)}")
    try:
        args = [float(p) for p in params.split(",")] if params else []
    except ValueError:
        raise UsageError(f"bad parameters in {text!r}") from None
    arities, build = FUNCTIONS[name]
    if len(args) not in arities:
        raise UsageError(f"{name} takes {' or '.join(map(str, arities))} parameters")
    return build(*args)


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def _positive(s: str) -> float:
    v = float(s)
    if not v > 0 or not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {s}")
    return v


def _levels(s: str) -> list[float]:
    try:
        out = [float(t) for t in s.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad level list {s!r}") from None
    if not out or any(not v > 0 for v in out):
        raise argparse.ArgumentTypeError("levels must be positive numbers")
    return out


def _add_mesh_source(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("mesh source (a --test picks its own disc by default)")
    src = g.add_mutually_exclusive_group()
    src.add_argument("--mesh", metavar="PREFIX",
                     help="read PREFIX.node, PREFIX.ele and PREFIX.neigh (if present)")
    src.add_argument("--disc", type=_positive, metavar="R", help="generate a disc of radius R")
    g.add_argument("--dx", type=_positive, default=0.1,
                   help="nominal mesh size of the generated mesh (default 0.1)")
    g.add_argument("--jitter", type=float, default=MESH_JITTER,
                   help=f"vertex jitter of generated meshes (default {MESH_JITTER})")


def _add_outputs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", type=Path, help="x y value text file")
    p.add_argument("--vtk", type=Path, help="legacy VTK file with the field")
    p.add_argument("--plot", type=Path, help="PNG contour plot of the field")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hopflax", description=__doc__.split("\n")[0])
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: $HOPFLAX_THREADS or core count)")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh-gen", help="write a disc mesh in Triangle format")
    p.add_argument("--disc", type=_positive, required=True, metavar="R", help="disc radius")
    size = p.add_mutually_exclusive_group(required=True)
    size.add_argument("--h", type=_positive, help="ring spacing")
    size.add_argument("--dx", type=_positive, help="target longest edge (calibrates the spacing)")
    p.add_argument("--jitter", type=float, default=0.0, help="vertex jitter (default 0)")
    p.add_argument("--seed", type=int, default=MESH_SEED, help="jitter seed")
    p.add_argument("--prefix", required=True, help="output path prefix")
    p.add_argument("--base", type=int, choices=(0, 1), default=1, help="index base of the files")

    p = sub.add_parser("solve-evolutive", help="time-dependent problem")
    p.add_argument("--test", choices=("1", "2"), help="built-in problem")
    p.add_argument("--u0", help="initial datum as name[:params] (custom problem)")
    p.add_argument("--final-time", type=_positive, default=None, help="T (default 2)")
    p.add_argument("--c", type=_positive, default=0.5, help="dt = c * dx**exp (default 0.5)")
    p.add_argument("--exp", type=float, default=0.5, help="default 0.5")
    p.add_argument("--seed-coef", type=_positive, default=2.0, help="seed displacement C (default 2)")
    p.add_argument("--refine", action="store_true", help="quadratic refinement of minima")
    p.add_argument("--no-clamp", action="store_true", help="use refined values even above the node minimum")
    p.add_argument("--warm-start", action="store_true", help="single walk from the previous minimiser")
    _add_mesh_source(p)
    _add_outputs(p)

    p = sub.add_parser("solve-stationary", help="discounted stationary problem")
    p.add_argument("--test", choices=("3", "4", "flower"), help="built-in problem")
    p.add_argument("--f", dest="source", help="running cost as name[:params] (custom problem)")
    p.add_argument("--boundary", help="weak Dirichlet datum as name[:params]")
    p.add_argument("--lam", type=_positive, default=None, help="discount rate (default 1)")
    p.add_argument("--solver", choices=("vi", "pi", "mpi"), default="pi")
    p.add_argument("--quad", choices=sorted(QUAD_NAMES), default="rect")
    p.add_argument("--c", type=_positive, default=None, help="dt = c * dx**exp (default per rule)")
    p.add_argument("--exp", type=float, default=None)
    p.add_argument("--tol", type=_positive, default=1e-12, help="VI stopping tolerance")
    p.add_argument("--inner-tol", type=_positive, default=1e-12, help="MPI evaluation tolerance")
    p.add_argument("--seed-coef", type=_positive, default=2.0)
    p.add_argument("--refine", action="store_true", help="quadratic refinement (VI only)")
    p.add_argument("--policy", type=Path, help="write 'j k_j' pairs")
    _add_mesh_source(p)
    _add_outputs(p)

    p = sub.add_parser("convergence", help="error table over mesh levels")
    p.add_argument("--test", choices=("1", "2", "3", "4"), required=True)
    p.add_argument("--levels", type=_levels, default=[0.1, 0.05, 0.025, 0.0125])
    p.add_argument("--solver", choices=("vi", "pi", "mpi"), default="pi")
    p.add_argument("--quad", choices=sorted(QUAD_NAMES), default="rect")
    p.add_argument("--c", type=_positive, default=None)
    p.add_argument("--exp", type=float, default=None)
    p.add_argument("--tol", type=_positive, default=1e-12)
    p.add_argument("--inner-tol", type=_positive, default=1e-12)
    p.add_argument("--seed-coef", type=_positive, default=2.0)
    p.add_argument("--refine", action="store_true")
    p.add_argument("--warm-start", action="store_true")
    p.add_argument("--jitter", type=float, default=MESH_JITTER)
    p.add_argument("--out", type=Path, required=True, help="CSV table")
    p.add_argument("--gnuplot", type=Path, help="error-vs-time data file")
    p.add_argument("--plot", type=Path, help="PNG error-vs-time figure")
    p.add_argument("--plot-convergence", type=Path, help="PNG error-vs-dx figure")
    p.add_argument("--no-timing", action="store_true",
                   help="leave the seconds column empty (byte-reproducible output)")
    return parser


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def _load_mesh(args, default_radius: float | None) -> Mesh:
    if args.mesh:
        prefix = args.mesh
        node, ele, neigh = (Path(prefix + s) for s in (".node", ".ele", ".neigh"))
        for f in (node, ele):
            if not f.exists():
                raise FileNotFoundError(f"missing mesh file {f}")
        return load_triangle_mesh(node, ele, neigh if neigh.exists() else None)
    radius = args.disc if args.disc is not None else default_radius
    if radius is None:
        raise UsageError("give --mesh or --disc")
    return disc_level_mesh(radius, args.dx, args.jitter, MESH_SEED)


def _write_outputs(args, m: Mesh, values, extra_fields=None) -> None:
    if args.out:
        write_xyz(m, values, args.out)
    if args.vtk:
        fields = {"value": values}
        fields.update(extra_fields or {})
        write_vtk(m, fields, args.vtk)
    if args.plot:
        from .plotting import plot_field

        plot_field(m, values, args.plot)


def cmd_mesh_gen(args) -> int:
    if args.h is not None:
        m = gen_disc_mesh(args.disc, args.h, args.jitter, args.seed)
    else:
        m = disc_mesh_for_dx(args.disc, args.dx, args.jitter, args.seed)
    write_triangle_mesh(m, args.prefix, base=args.base)
    print(f"{m.n_vertices} vertices, {m.n_triangles} triangles, longest edge {m.h_max:.6g}")
    return 0


def cmd_solve_evolutive(args) -> int:
    if (args.test is None) == (args.u0 is None):
        raise UsageError("give exactly one of --test and --u0")
    tc = get_test_case(args.test) if args.test else None
    if args.no_clamp and not args.refine:
        raise UsageError("--no-clamp only applies with --refine")
    m = _load_mesh(args, tc.radius if tc else None)
    u0 = tc.u0 if tc else parse_function(args.u0)
    T = args.final_time if args.final_time is not None else (tc.final_time if tc else 2.0)
    cfg = EvolutiveConfig(args.c, args.exp, T, args.seed_coef, refine=args.refine,
                          warm_start=args.warm_start, clamp_refined=not args.no_clamp)
    v = run_evolutive(m, ConjugateHamiltonian.quadratic(), u0, cfg)
    msg = f"{m.n_vertices} vertices, {v.stats['n_steps']} steps of {v.dt:.6g}"
    if tc is not None:
        e = relative_errors(v, exact_solution(tc, m.vertices, T))
        msg += f", E1 {e.e1:.4e}, Einf {e.einf:.4e}"
    print(msg)
    _write_outputs(args, m, v.values)
    return 0


def cmd_solve_stationary(args) -> int:
    if (args.test is None) == (args.source is None):
        raise UsageError("give exactly one of --test and --f")
    if args.refine and args.solver != "vi":
        raise UsageError("--refine is only available with --solver vi")
    quad = QUAD_NAMES[args.quad]
    tc = get_test_case(args.test) if args.test else None
    if tc is not None and args.boundary:
        raise UsageError("--boundary applies to custom problems only")
    if tc is not None and tc.id == "flower" and not args.mesh:
        raise UsageError("the flower problem needs --mesh")
    m = _load_mesh(args, tc.radius if tc else None)
    c0, e0 = STATIONARY_DT_RULES[quad]
    dt = (args.c or c0) * m.h_max ** (e0 if args.exp is None else args.exp)
    f = tc.f if tc else parse_function(args.source)
    b = tc.boundary if tc else (parse_function(args.boundary) if args.boundary else None)
    lam = args.lam if args.lam is not None else (tc.lam if tc else 1.0)
    p = StationaryProblem(lam, f, ConjugateHamiltonian.quadratic(), dt, quad, b)
    seeds = build_seed_table(m, args.seed_coef, dt)
    if args.solver == "vi":
        from .refine import build_stencil_table

        st = build_stencil_table(m) if args.refine else None
        v, it = value_iteration(p, m, seeds, 1.0, args.tol, stencils=st)
        policy = v.argmin
    else:
        run = policy_iteration if args.solver == "pi" else modified_policy_iteration
        kw = {} if args.solver == "pi" else {"inner_tol": args.inner_tol}
        res = run(p, m, seeds, **kw)
        v, it, policy = res.field, res.iterations, res.policy.k
    msg = f"{m.n_vertices} vertices, dt {dt:.6g}, {it} iterations ({args.solver})"
    if tc is not None and tc.exact is not None:
        e = relative_errors(v, exact_solution(tc, m.vertices))
        msg += f", E1 {e.e1:.4e}, Einf {e.einf:.4e}"
    elif tc is not None:
        q = qualitative_checks(m, v, dt, lam)
        msg += f", boundary max {q.boundary_max_abs:.1e}, rank correlation {q.spearman:.4f}"
    print(msg)
    if args.policy:
        write_policy(policy, args.policy)
    _write_outputs(args, m, v.values, {"policy": np.asarray(policy, dtype=np.int64)})
    return 0


def cmd_convergence(args) -> int:
    tc = get_test_case(args.test)
    if tc.evolutive and args.solver != "pi":
        raise UsageError("--solver applies to stationary tests only")
    opts = SolverOptions(
        solver=args.solver, refine=args.refine, warm_start=args.warm_start,
        seed_coef=args.seed_coef, tol=args.tol, inner_tol=args.inner_tol,
        dt_c=args.c, dt_exp=args.exp,
        quad_rule=None if tc.evolutive else QUAD_NAMES[args.quad], jitter=args.jitter,
    )

    def progress(r):
        logger.info("dx=%g nx=%d e1=%.4e einf=%.4e n=%d %.2fs", r.dx, r.nx, r.e1, r.einf, r.n, r.seconds)

    status = 0
    try:
        rows = run_convergence(tc, args.levels, opts, progress=progress)
    except ConvergenceAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        rows, status = exc.rows, 1
    args.out.write_text(rows_to_csv(rows, timing=not args.no_timing))
    label = f"{tc.id}{' refined' if args.refine else ''}"
    if args.gnuplot:
        write_gnuplot({label: rows}, args.gnuplot)
    if args.plot or args.plot_convergence:
        from .plotting import plot_convergence, plot_error_vs_time

        if args.plot:
            plot_error_vs_time({label: rows}, args.plot)
        if args.plot_convergence:
            plot_convergence(rows, args.plot_convergence, label)
    sys.stdout.write(rows_to_csv(rows, timing=not args.no_timing))
    return status


COMMANDS = {
    "mesh-gen": cmd_mesh_gen,
    "solve-evolutive": cmd_solve_evolutive,
    "solve-stationary": cmd_solve_stationary,
    "convergence": cmd_convergence,
}


def parse_and_run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.threads is not None:
            set_threads(args.threads)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))
    except (OSError, ValueError, MeshError, ConvergenceError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(parse_and_run())


if __name__ == "__main__":
    main()
