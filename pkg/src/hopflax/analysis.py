"""Benchmark problems, error norms and convergence tables.

Four problems with closed-form solutions are built in: two evolutive ones
on discs (a smooth convex solution and one with an expanding kink) and two
discounted stationary ones (a single well and a double well). A fifth,
``flower``, has no exact solution and is checked qualitatively.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import dijkstra
from scipy.stats import spearmanr

from .evolutive import EvolutiveConfig, NodeField, run_evolutive
from .hamiltonian import ConjugateHamiltonian
from .mesh import Mesh, build_seed_table, gen_disc_mesh
from .refine import build_stencil_table
from .stationary import (
    RECTANGULAR, TRAPEZOIDAL, StationaryProblem, modified_policy_iteration,
    policy_iteration, value_iteration,
)

logger = logging.getLogger(__name__)

#: Jitter (fraction of the ring spacing) of the disc meshes used for
#: convergence studies. Exact ring alignment aliases with radially
#: symmetric solutions and makes the error ratio between levels wobble.
MESH_JITTER = 0.15
MESH_SEED = 20240601
#: Ring spacing of level meshes is ``dx / LEVEL_SPACING_RATIO``. With the
#: default jitter this puts the longest edge at about ``dx`` on the coarsest
#: level, and every level keeps the same density law, so vertex counts grow
#: by four per halving. (Calibrating each level on its longest edge would
#: not: that edge grows slowly with mesh size.)
LEVEL_SPACING_RATIO = 1.67

CSV_COLUMNS = ("dx", "dt", "nx", "nt", "e1", "eoc1", "einf", "eocinf", "n", "seconds")

PointFunction = Callable[[np.ndarray], np.ndarray]


def _norm2(x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return x[:, 0] ** 2 + x[:, 1] ** 2


def _u1(x, t):
    r2 = _norm2(x)
    r = np.sqrt(r2)
    if t == 0:
        return r
    return np.where(r <= t, r2 / (2 * t), r - t / 2)


def _u2(x, t):
    return np.minimum(_norm2(x) / (2 * t + 1) - 1, 0.0)


def _u3(x, t=None):
    return 0.5 * _norm2(x)


def _u4(x, t=None):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    a = (x[:, 0] - 1) ** 2 + x[:, 1] ** 2
    b = (x[:, 0] + 1) ** 2 + x[:, 1] ** 2
    return 0.5 * np.minimum(a, b)


@dataclass(frozen=True)
class TestCase:
    """A benchmark problem.

    ``kind`` is ``"evolutive"`` or ``"stationary"``. ``exact(x, t)`` is the
    closed-form solution (``t`` ignored for stationary problems) or None.
    ``dt_c`` and ``dt_exp`` give the default rule ``dt = dt_c * dx**dt_exp``.
    """

    __test__ = False  # not a pytest class

    id: str
    kind: str
    radius: float | None
    exact: Callable[[np.ndarray, float], np.ndarray] | None
    dt_c: float
    dt_exp: float
    u0: PointFunction | None = None
    f: PointFunction | None = None
    final_time: float = 2.0
    lam: float = 1.0
    quad_rule: str = RECTANGULAR
    boundary: PointFunction | None = None
    mesh_file: str | None = None

    @property
    def evolutive(self) -> bool:
        return self.kind == "evolutive"

    def with_quad_rule(self, rule: str) -> "TestCase":
        """Same stationary problem with the other quadrature and its dt rule."""
        if self.evolutive:
            raise ValueError("quadrature rules apply to stationary problems only")
        c, e = STATIONARY_DT_RULES[rule]
        return TestCase(
            self.id, self.kind, self.radius, self.exact, c, e, self.u0, self.f,
            self.final_time, self.lam, rule, self.boundary, self.mesh_file,
        )


#: Default time-step rule per quadrature: (c, exponent).
STATIONARY_DT_RULES = {RECTANGULAR: (0.5, 2.0 / 3.0), TRAPEZOIDAL: (0.2, 0.5)}

TEST_CASES: dict[str, TestCase] = {
    "test1": TestCase("test1", "evolutive", 2.0, _u1, 0.5, 0.5,
                      u0=lambda x: np.sqrt(_norm2(x))),
    "test2": TestCase("test2", "evolutive", 2.5, _u2, 0.5, 0.5,
                      u0=lambda x: np.minimum(_norm2(x) - 1, 0.0)),
    "test3": TestCase("test3", "stationary", 2.0, _u3, 0.5, 2.0 / 3.0,
                      f=lambda x: _norm2(x)),
    "test4": TestCase("test4", "stationary", 2.0, _u4, 0.5, 2.0 / 3.0,
                      f=lambda x: 2.0 * _u4(x)),
    "flower": TestCase("flower", "stationary", None, None, 0.5, 2.0 / 3.0,
                       f=lambda x: np.ones(len(np.atleast_2d(x))),
                       boundary=lambda x: np.zeros(len(np.atleast_2d(x)))),
}


def get_test_case(name) -> TestCase:
    """Look up ``"test1"``, ``"1"``, ``1`` or ``"flower"``."""
    key = str(name).lower()
    if key.isdigit():
        key = "test" + key
    try:
        return TEST_CASES[key]
    except KeyError:
        raise KeyError(f"unknown test case {name!r}; known: {', '.join(TEST_CASES)}") from None


def exact_solution(tc: TestCase, x, t: float | None = None) -> np.ndarray:
    """Exact solution at the points ``x`` (shape (n, 2) or (2,)).

    For evolutive problems ``t`` defaults to the final time.
    """
    if tc.exact is None:
        raise ValueError(f"{tc.id} has no closed-form solution")
    pts = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if tc.evolutive:
        t = tc.final_time if t is None else float(t)
        if t < 0:
            raise ValueError("time must be nonnegative")
    out = tc.exact(pts, t)
    return out if np.ndim(x) > 1 else out[0]


class ErrorNorms(NamedTuple):
    e1: float
    einf: float
    relative: bool = True


def relative_errors(v, exact) -> ErrorNorms:
    """Relative discrete L1 and max errors of ``v`` against ``exact``.

    When the exact field vanishes identically the absolute norms are
    returned and ``relative`` is False.
    """
    v = v.values if isinstance(v, NodeField) else np.asarray(v, dtype=np.float64)
    u = exact.values if isinstance(exact, NodeField) else np.asarray(exact, dtype=np.float64)
    if v.shape != u.shape:
        raise ValueError("fields have different lengths")
    d = np.abs(u - v)
    s1, sinf = float(np.sum(np.abs(u))), float(np.max(np.abs(u)))
    if s1 == 0.0:
        return ErrorNorms(float(np.sum(d)), float(np.max(d)), False)
    return ErrorNorms(float(np.sum(d)) / s1, float(np.max(d)) / sinf, True)


def eoc(coarse_err: float, fine_err: float) -> float:
    """``log2(coarse / fine)``; NaN when either error is not positive."""
    if not (coarse_err > 0 and fine_err > 0):
        return math.nan
    return math.log2(coarse_err / fine_err)


@dataclass
class ConvergenceRow:
    dx: float
    dt: float
    nx: int
    nt: int
    e1: float
    eoc1: float | None
    einf: float
    eocinf: float | None
    n: int
    seconds: float
    extra: dict = field(default_factory=dict)


@dataclass
class SolverOptions:
    """How each level is solved.

    ``solver`` is ``"vi"``, ``"pi"`` or ``"mpi"`` for stationary problems
    (ignored for evolutive ones). ``dt_c``/``dt_exp``/``quad_rule`` override
    the test case defaults when set.
    """

    solver: str = "pi"
    refine: bool = False
    warm_start: bool = False
    seed_coef: float = 2.0
    tol: float = 1e-12
    inner_tol: float = 1e-12
    dt_c: float | None = None
    dt_exp: float | None = None
    quad_rule: str | None = None
    clamp_refined: bool = True
    jitter: float = MESH_JITTER
    mesh_seed: int = MESH_SEED

    def __post_init__(self):
        if self.solver not in ("vi", "pi", "mpi"):
            raise ValueError(f"unknown solver {self.solver!r}")


class ConvergenceAborted(RuntimeError):
    """A level failed; ``rows`` holds the levels completed before it."""

    def __init__(self, msg: str, rows: list[ConvergenceRow]):
        super().__init__(msg)
        self.rows = rows


def level_mesh(tc: TestCase, dx: float, opts: SolverOptions | None = None) -> Mesh:
    """Disc mesh for ``tc`` at nominal mesh size ``dx``."""
    opts = opts or SolverOptions()
    if tc.radius is None:
        raise ValueError(f"{tc.id} has no built-in mesh; pass a mesh explicitly")
    return disc_level_mesh(tc.radius, dx, opts.jitter, opts.mesh_seed)


def disc_level_mesh(radius: float, dx: float, jitter: float = MESH_JITTER, seed: int = MESH_SEED) -> Mesh:
    """Disc mesh at nominal mesh size ``dx`` (see :data:`LEVEL_SPACING_RATIO`)."""
    return gen_disc_mesh(radius, dx / LEVEL_SPACING_RATIO, jitter, seed)


def _resolve(tc: TestCase, opts: SolverOptions) -> TestCase:
    if opts.quad_rule is not None and not tc.evolutive and opts.quad_rule != tc.quad_rule:
        tc = tc.with_quad_rule(opts.quad_rule)
    return tc


def dt_for(tc: TestCase, dx: float, opts: SolverOptions | None = None) -> float:
    opts = opts or SolverOptions()
    tc = _resolve(tc, opts)
    c = tc.dt_c if opts.dt_c is None else opts.dt_c
    e = tc.dt_exp if opts.dt_exp is None else opts.dt_exp
    return c * dx**e


def solve_level(tc: TestCase, m: Mesh, opts: SolverOptions, h=None) -> tuple[NodeField, dict]:
    """Solve ``tc`` on ``m`` and return the field plus run statistics."""
    h = h or ConjugateHamiltonian.quadratic()
    tc = _resolve(tc, opts)
    if tc.evolutive:
        cfg = EvolutiveConfig(
            dt_c=tc.dt_c if opts.dt_c is None else opts.dt_c,
            dt_exp=tc.dt_exp if opts.dt_exp is None else opts.dt_exp,
            final_time=tc.final_time, seed_coef=opts.seed_coef, boundary=tc.boundary,
            refine=opts.refine, warm_start=opts.warm_start, clamp_refined=opts.clamp_refined,
        )
        v = run_evolutive(m, h, tc.u0, cfg)
        stats = {"n": v.stats["n_steps"], "walk_steps": int(np.sum(v.stats["walk_steps"]))}
        if opts.refine:
            stats["rejection_fraction"] = float(np.mean(v.stats["rejection_fraction"]))
        return v, stats
    dt = dt_for(tc, m.h_max, opts)
    p = StationaryProblem(tc.lam, tc.f, h, dt, tc.quad_rule, tc.boundary)
    seeds = build_seed_table(m, opts.seed_coef, dt)
    if opts.solver == "vi":
        stencils = build_stencil_table(m) if opts.refine else None
        v, it = value_iteration(p, m, seeds, 1.0, opts.tol, stencils=stencils)
        return v, {"n": it}
    if opts.refine:
        raise ValueError("quadratic refinement is only available with value iteration")
    if opts.solver == "pi":
        res = policy_iteration(p, m, seeds)
    else:
        res = modified_policy_iteration(p, m, seeds, inner_tol=opts.inner_tol)
    stats = {"n": res.iterations, "max_increase": res.field.stats["max_increase"]}
    if "inner_iterations" in res.field.stats:
        stats["inner_iterations"] = res.field.stats["inner_iterations"]
    res.field.argmin = res.policy.k
    return res.field, stats


def run_convergence(
    tc: TestCase,
    levels: Sequence[float],
    opts: SolverOptions | None = None,
    meshes: Sequence[Mesh] | None = None,
    progress: Callable[[ConvergenceRow], None] | None = None,
    on_level: Callable[[ConvergenceRow, Mesh, NodeField], None] | None = None,
) -> list[ConvergenceRow]:
    """Solve ``tc`` on one mesh per level and tabulate errors and EOCs.

    ``meshes`` replaces the built-in disc meshes. Time steps follow the
    measured longest edge of each mesh. ``on_level`` receives each row with
    its mesh and computed field. A failing level raises
    :class:`ConvergenceAborted` carrying the rows finished so far.
    """
    opts = opts or SolverOptions()
    if tc.exact is None:
        raise ValueError(f"{tc.id} has no exact solution to measure errors against")
    rows: list[ConvergenceRow] = []
    for i, dx in enumerate(levels):
        try:
            m = meshes[i] if meshes is not None else level_mesh(tc, dx, opts)
            t0 = time.perf_counter()
            v, stats = solve_level(tc, m, opts)
            seconds = time.perf_counter() - t0
        except Exception as exc:  # noqa: BLE001 - reported with partial rows
            logger.error("level dx=%g failed: %s", dx, exc)
            raise ConvergenceAborted(f"level dx={dx:g} failed: {exc}", rows) from exc
        err = relative_errors(v, exact_solution(tc, m.vertices))
        prev = rows[-1] if rows else None
        row = ConvergenceRow(
            dx=float(dx), dt=float(v.dt), nx=m.n_vertices, nt=m.n_triangles,
            e1=err.e1, eoc1=eoc(prev.e1, err.e1) if prev else None,
            einf=err.einf, eocinf=eoc(prev.einf, err.einf) if prev else None,
            n=int(stats.pop("n")), seconds=seconds, extra=stats,
        )
        row.extra["h_max"] = m.h_max
        rows.append(row)
        if progress is not None:
            progress(row)
        if on_level is not None:
            on_level(row, m, v)
    return rows


def _fmt(x, pattern: str) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return format(x, pattern)


def rows_to_csv(rows: Iterable[ConvergenceRow], timing: bool = True) -> str:
    """CSV text with the fixed column set; ``timing=False`` blanks the
    seconds column so that repeated runs compare byte for byte."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([
            _fmt(r.dx, "g"), _fmt(r.dt, ".6g"), r.nx, r.nt,
            _fmt(r.e1, ".6e"), _fmt(r.eoc1, ".4f"), _fmt(r.einf, ".6e"), _fmt(r.eocinf, ".4f"),
            r.n, _fmt(r.seconds, ".3f") if timing else "",
        ])
    return buf.getvalue()


def write_csv(rows: Iterable[ConvergenceRow], path, timing: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(rows_to_csv(rows, timing))


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_gnuplot(series: dict[str, Sequence[ConvergenceRow]], path) -> None:
    """Error-versus-time data: one index block per series with columns
    ``seconds e1 einf dx``. Blocks are separated by two blank lines so that
    gnuplot's ``index`` selects them."""
    with open(path, "w") as fh:
        for i, (label, rows) in enumerate(series.items()):
            if i:
                fh.write("\n\n")
            fh.write(f"# {label}\n# seconds e1 einf dx\n")
            for r in rows:
                fh.write(f"{r.seconds:.6g} {r.e1:.6e} {r.einf:.6e} {r.dx:g}\n")


# --------------------------------------------------------------------------
# domains without exact solutions
# --------------------------------------------------------------------------


def boundary_graph_distance(m: Mesh) -> np.ndarray:
    """Shortest edge-path length from every vertex to the boundary."""
    e = m.edges()
    w = np.linalg.norm(m.vertices[e[:, 0]] - m.vertices[e[:, 1]], axis=1)
    g = sparse.coo_matrix((w, (e[:, 0], e[:, 1])), shape=(m.n_vertices,) * 2).tocsr()
    return dijkstra(g, directed=False, indices=np.flatnonzero(m.boundary), min_only=True)


@dataclass
class QualitativeReport:
    boundary_max_abs: float
    min_value: float
    max_value: float
    upper_bound: float
    spearman: float

    def passed(self, rho_min: float = 0.95, atol: float = 1e-12) -> bool:
        return (
            self.boundary_max_abs <= atol
            and self.min_value >= -atol
            and self.max_value <= self.upper_bound + atol
            and self.spearman >= rho_min
        )


def qualitative_checks(m: Mesh, v, dt: float, lam: float = 1.0, f_max: float = 1.0) -> QualitativeReport:
    """Properties expected of a distance-like solution with zero boundary
    data: zero on the boundary, nonnegative, bounded by ``dt f/(1-beta)``
    and increasing with distance to the boundary."""
    vals = v.values if isinstance(v, NodeField) else np.asarray(v, dtype=np.float64)
    beta = math.exp(-lam * dt)
    rho = spearmanr(vals, boundary_graph_distance(m)).statistic
    return QualitativeReport(
        float(np.max(np.abs(vals[m.boundary]))), float(vals.min()), float(vals.max()),
        dt * f_max / (1 - beta), float(rho),
    )
