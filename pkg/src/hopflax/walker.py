"""Minimisation over mesh vertices by descent walks along the vertex graph.

A walk moves from the current vertex to the strict minimiser among its
not-yet-visited neighbours until no neighbour improves on it. Four seeded
walks per home vertex (see :func:`multi_seed_minimize`) guard against the
local minima that appear where the data has kinks.

Two layers live here: a pure-Python API taking any ``objective(k)``
callable, and :func:`sweep_minimize`, which runs every home vertex at once
with the compiled kernels when the conjugate is quadratic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numba
import numpy as np

from . import _kernels
from .hamiltonian import ConjugateHamiltonian, eval_conjugate
from .mesh import Mesh, MeshError, SeedTable, rotate_neighbors

Objective = Callable[[int], float]


class WalkError(RuntimeError):
    """A walk exceeded its step budget; strict descent makes this a bug."""


@dataclass(frozen=True)
class WalkResult:
    argmin_index: int
    min_value: float
    steps: int


class VisitedBuffer:
    """Reusable visited marks; a new walk only bumps a generation counter."""

    def __init__(self, n: int):
        self.stamp = np.zeros(n, dtype=np.int64)
        self.generation = 0

    def next_walk(self) -> int:
        self.generation += 1
        return self.generation

    def mark(self, v: int) -> bool:
        """Mark ``v``; return False if it was already marked in this walk."""
        if self.stamp[v] == self.generation:
            return False
        self.stamp[v] = self.generation
        return True


class _Neighbors:
    def __init__(self, m: Mesh):
        self.m = m
        self.buf = np.empty(m.max_degree() + 1, dtype=np.int64)

    def __call__(self, v: int) -> np.ndarray:
        m = self.m
        k = rotate_neighbors(v, m.triangles, m.tri_neighbors, m.incident_tri, self.buf)
        if k < 0:
            raise MeshError(f"corrupted connectivity around vertex {v}")
        return self.buf[:k]


def walk_descent(
    m: Mesh,
    objective: Objective,
    seed: int,
    visited: VisitedBuffer | None = None,
    _neighbors: _Neighbors | None = None,
) -> WalkResult:
    """Descend from ``seed`` to a local minimum of ``objective`` on the
    vertex graph.

    Equal values never trigger a move; among strictly better neighbours the
    lowest index wins. ``steps`` counts objective evaluations, so a seed
    that is already a local minimum costs ``1 + degree(seed)``.
    """
    if not 0 <= seed < m.n_vertices:
        raise IndexError(f"seed {seed} out of range")
    visited = visited if visited is not None else VisitedBuffer(m.n_vertices)
    neighbors = _neighbors if _neighbors is not None else _Neighbors(m)
    visited.next_walk()
    cur = int(seed)
    fcur = objective(cur)
    visited.mark(cur)
    steps = 1
    for _ in range(m.n_vertices + 1):
        best, fbest = cur, fcur
        for k in neighbors(cur):
            k = int(k)
            if not visited.mark(k):
                continue
            steps += 1
            fk = objective(k)
            if fk < fbest or (fk == fbest and best != cur and k < best):
                best, fbest = k, fk
        if best == cur:
            return WalkResult(cur, fcur, steps)
        cur, fcur = best, fbest
    raise WalkError(f"walk from {seed} exceeded {m.n_vertices} steps")


def _memoized(objective: Objective) -> Objective:
    cache: dict[int, float] = {}

    def f(k: int) -> float:
        try:
            return cache[k]
        except KeyError:
            v = cache[k] = objective(k)
            return v

    return f


def _best(results: list[WalkResult]) -> WalkResult:
    best = min(results, key=lambda r: (r.min_value, r.argmin_index))
    return WalkResult(best.argmin_index, best.min_value, sum(r.steps for r in results))


def multi_seed_minimize(
    m: Mesh,
    objective: Objective,
    j: int,
    seeds: SeedTable,
    visited: VisitedBuffer | None = None,
) -> WalkResult:
    """Best of the walks started from the (distinct) seeds of home ``j``.

    The returned ``steps`` is the total over all walks.
    """
    objective = _memoized(objective)
    visited = visited if visited is not None else VisitedBuffer(m.n_vertices)
    neighbors = _Neighbors(m)
    starts = list(dict.fromkeys(int(s) for s in seeds.seeds[:, j]))
    return _best([walk_descent(m, objective, s, visited, neighbors) for s in starts])


def warm_start_minimize(
    m: Mesh,
    objective: Objective,
    prev_argmin: int,
    visited: VisitedBuffer | None = None,
) -> WalkResult:
    """Single walk from the previous minimiser; only sound for convex data."""
    return walk_descent(m, objective, prev_argmin, visited)


def hopf_lax_objective(
    m: Mesh, h: ConjugateHamiltonian, base: np.ndarray, dt: float, j: int
) -> Objective:
    """``k -> base[k] + dt * H*((x_j - x_k) / dt)`` as a Python callable."""
    xj = m.vertices[j]

    def f(k: int) -> float:
        return float(base[k] + dt * eval_conjugate(h, (xj - m.vertices[k]) / dt))

    return f


# --------------------------------------------------------------------------
# whole-mesh sweeps
# --------------------------------------------------------------------------


@dataclass
class SweepResult:
    """Per-home results of one sweep.

    ``values`` include refinement when requested; ``raw`` are the plain
    node minima. ``refine_flag`` is 0 (not attempted), 1 (accepted) or
    2 (rejected, node value kept).
    """

    values: np.ndarray
    raw: np.ndarray
    argmin: np.ndarray
    steps: np.ndarray
    refine_flag: np.ndarray

    @property
    def rejection_fraction(self) -> float:
        tried = self.refine_flag != _kernels.REFINE_NONE
        if not tried.any():
            return 0.0
        return float(np.mean(self.refine_flag[tried] == _kernels.REFINE_REJECTED))


def sweep_minimize(
    m: Mesh,
    h: ConjugateHamiltonian,
    base: np.ndarray,
    dt: float,
    seeds: np.ndarray,
    homes: np.ndarray | None = None,
    stencils=None,
    clamp: bool = True,
) -> SweepResult:
    """Minimise ``F_j(k) = base[k] + dt*H*((x_j - x_k)/dt)`` for all homes.

    Parameters
    ----------
    seeds : (S, N) int array
        Walk starting vertices per home; ``S = 4`` for the displacement
        seeds, ``S = 1`` for warm starts.
    stencils : StencilTable, optional
        Enables quadratic refinement of each minimum.
    clamp : bool
        Keep ``min(refined, raw)`` instead of the refined value alone.
    """
    base = np.ascontiguousarray(base, dtype=np.float64)
    if not np.all(np.isfinite(base)):
        raise FloatingPointError("non-finite value in objective data")
    seeds = np.ascontiguousarray(np.atleast_2d(seeds), dtype=np.int64)
    if homes is None:
        homes = np.arange(m.n_vertices, dtype=np.int64)
    homes = np.ascontiguousarray(homes, dtype=np.int64)
    if not h.is_quadratic:
        return _sweep_python(m, h, base, dt, seeds, homes, stencils, clamp)
    nh = len(homes)
    out = SweepResult(
        np.empty(nh), np.empty(nh), np.empty(nh, dtype=np.int64),
        np.empty(nh, dtype=np.int64), np.empty(nh, dtype=np.int8),
    )
    if stencils is None:
        st_ptr = np.zeros(1, dtype=np.int64)
        st_idx = np.zeros(0, dtype=np.int64)
        st_ok = np.zeros(1, dtype=np.bool_)
        pinv = np.zeros(0)
        reach = np.zeros(1)
    else:
        st_ptr, st_idx, st_ok, pinv = stencils.ptr, stencils.idx, stencils.ok, stencils.pinv
        reach = stencils.reach
    mat = h.matrix
    nchunks = max(1, min(nh, 8 * numba.get_num_threads()))
    try:
        _kernels.sweep(
            m.vertices, m.triangles, m.tri_neighbors, m.incident_tri, m.boundary,
            seeds, base, float(dt), float(mat[0, 0]), float(mat[0, 1]), float(mat[1, 1]),
            homes, stencils is not None, clamp, st_ptr, st_idx, st_ok, pinv, reach,
            m.max_degree() + 1, nchunks,
            out.values, out.raw, out.argmin, out.steps, out.refine_flag,
        )
    except RuntimeError as exc:
        raise WalkError(str(exc)) from exc
    return out


def _sweep_python(m, h, base, dt, seeds, homes, stencils, clamp) -> SweepResult:
    from .refine import refine_minimum

    nh = len(homes)
    out = SweepResult(
        np.empty(nh), np.empty(nh), np.empty(nh, dtype=np.int64),
        np.empty(nh, dtype=np.int64), np.zeros(nh, dtype=np.int8),
    )
    visited = VisitedBuffer(m.n_vertices)
    neighbors = _Neighbors(m)
    for i, j in enumerate(homes):
        obj = _memoized(hopf_lax_objective(m, h, base, dt, int(j)))
        starts = list(dict.fromkeys(int(s) for s in seeds[:, j]))
        res = _best([walk_descent(m, obj, s, visited, neighbors) for s in starts])
        out.argmin[i] = res.argmin_index
        out.raw[i] = res.min_value
        out.steps[i] = res.steps
        out.values[i] = res.min_value
        if stencils is not None and not m.boundary[res.argmin_index]:
            val, accepted = refine_minimum(m, obj, res, stencils, clamp=clamp, with_status=True)
            out.values[i] = val
            out.refine_flag[i] = _kernels.REFINE_ACCEPTED if accepted else _kernels.REFINE_REJECTED
    return out
