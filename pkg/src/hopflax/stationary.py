"""Discounted stationary problem ``lambda u + H(Du) = f``.

The discrete fixed-point equation is

    v_j = min_k { beta v_k + dt H*((x_j - x_k)/dt) + [trap] dt/2 beta f_k } + const_j

with ``beta = exp(-lambda dt)`` and ``const_j = dt f_j`` (rectangular rule)
or ``dt/2 f_j`` (trapezoidal rule). It is solved by value iteration, exact
policy iteration, or modified policy iteration. A policy maps each vertex
to its minimising vertex ``k_j``; with weak Dirichlet data a boundary
vertex may instead choose :data:`STOP` and take the boundary value.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numba
import numpy as np

from .evolutive import NodeField
from .hamiltonian import ConjugateHamiltonian, eval_conjugate
from .mesh import Mesh, SeedTable
from .refine import StencilTable
from .walker import sweep_minimize

logger = logging.getLogger(__name__)

STOP = -1
RECTANGULAR = "rectangular"
TRAPEZOIDAL = "trapezoidal"


class ConvergenceError(RuntimeError):
    def __init__(self, msg: str, residual: float, field: NodeField | None = None):
        super().__init__(f"{msg} (residual {residual:.3e})")
        self.residual = residual
        self.field = field


@dataclass(frozen=True)
class StationaryProblem:
    lam: float
    f: Callable[[np.ndarray], np.ndarray]
    h: ConjugateHamiltonian
    dt: float
    quad_rule: str = RECTANGULAR
    boundary: Callable[[np.ndarray], np.ndarray] | None = None
    beta: float = field(init=False)

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("discount rate must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.quad_rule not in (RECTANGULAR, TRAPEZOIDAL):
            raise ValueError(f"unknown quadrature rule {self.quad_rule!r}")
        object.__setattr__(self, "beta", math.exp(-self.lam * self.dt))

    def discretize(self, m: Mesh) -> "_Discrete":
        return _Discrete(self, m)


class _Discrete:
    """Vertex samples of ``f`` and ``b`` and the derived objective pieces."""

    def __init__(self, p: StationaryProblem, m: Mesh):
        self.p, self.m = p, m
        self.fv = np.asarray(p.f(m.vertices), dtype=np.float64).reshape(m.n_vertices)
        if p.quad_rule == RECTANGULAR:
            self.const = p.dt * self.fv
            self.trap = None
        else:
            self.const = 0.5 * p.dt * self.fv
            self.trap = 0.5 * p.dt * p.beta * self.fv
        self.bvals = None
        if p.boundary is not None:
            self.bvals = np.full(m.n_vertices, np.inf)
            self.bvals[m.boundary] = np.asarray(p.boundary(m.vertices[m.boundary]), dtype=np.float64)

    def base(self, v: np.ndarray) -> np.ndarray:
        b = self.p.beta * v
        return b if self.trap is None else b + self.trap

    def objective(self, v: np.ndarray, j: np.ndarray, k: np.ndarray) -> np.ndarray:
        """``F_j(k) + const_j`` for index arrays, matching the sweep kernel."""
        x = self.m.vertices
        q = (x[j] - x[k]) / self.p.dt
        return self.base(v)[k] + self.p.dt * eval_conjugate(self.p.h, q) + self.const[j]

    def costs(self, pol: np.ndarray) -> np.ndarray:
        """Stage cost of every vertex under a policy (STOP rows are unused)."""
        p = self.p
        j = np.arange(self.m.n_vertices)
        k = np.where(pol == STOP, j, pol)
        hs = eval_conjugate(p.h, (self.m.vertices[j] - self.m.vertices[k]) / p.dt)
        if p.quad_rule == RECTANGULAR:
            return p.dt * (hs + self.fv)
        return p.dt * hs + 0.5 * p.dt * (self.fv + p.beta * self.fv[k])


@dataclass
class Policy:
    """Minimising vertex per vertex; :data:`STOP` means take the boundary datum."""

    k: np.ndarray

    def __post_init__(self):
        self.k = np.asarray(self.k, dtype=np.int64)

    @classmethod
    def self_loop(cls, n: int) -> "Policy":
        return cls(np.arange(n, dtype=np.int64))

    def __eq__(self, other) -> bool:
        return isinstance(other, Policy) and np.array_equal(self.k, other.k)


class StationaryResult(NamedTuple):
    field: NodeField
    policy: Policy
    iterations: int


def stage_cost(p: StationaryProblem, m: Mesh, j: int, k: int) -> float:
    x = m.vertices
    hs = eval_conjugate(p.h, (x[j] - x[k]) / p.dt)
    fj = float(np.asarray(p.f(x[j : j + 1])).ravel()[0])
    if p.quad_rule == RECTANGULAR:
        return p.dt * (hs + fj)
    fk = float(np.asarray(p.f(x[k : k + 1])).ravel()[0])
    return p.dt * hs + 0.5 * p.dt * (fj + p.beta * fk)


def _bellman(d: _Discrete, seeds: SeedTable, v: np.ndarray, stencils=None):
    res = sweep_minimize(d.m, d.p.h, d.base(v), d.p.dt, seeds.seeds, stencils=stencils)
    return res.values + d.const, res


def value_iteration(
    p: StationaryProblem,
    m: Mesh,
    seeds: SeedTable,
    v0: NodeField | np.ndarray | float = 1.0,
    tol: float = 1e-12,
    max_iter: int = 100_000,
    stencils: StencilTable | None = None,
) -> tuple[NodeField, int]:
    """Fixed-point iteration of the discrete Bellman operator.

    Stops when successive iterates differ by less than ``tol`` in max norm.
    ``stencils`` turns on quadratic refinement of the minimum.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    d = p.discretize(m)
    v = _initial(v0, m.n_vertices)
    res = None
    diffs = []
    for it in range(1, max_iter + 1):
        new, res = _bellman(d, seeds, v, stencils)
        if d.bvals is not None:
            np.minimum(new, d.bvals, out=new)
        diff = float(np.max(np.abs(new - v)))
        diffs.append(diff)
        v = new
        if diff < tol:
            out = NodeField(v, it, p.dt, argmin=res.argmin)
            out.stats = {"residuals": diffs}
            return out, it
    raise ConvergenceError(
        f"value iteration did not converge in {max_iter} iterations", diffs[-1],
        NodeField(v, max_iter, p.dt),
    )


def _initial(v0, n: int) -> np.ndarray:
    if isinstance(v0, NodeField):
        return v0.values.copy()
    arr = np.asarray(v0, dtype=np.float64)
    return np.full(n, float(arr)) if arr.ndim == 0 else arr.copy()


def policy_improvement(
    p: StationaryProblem,
    m: Mesh,
    seeds: SeedTable,
    v: NodeField | np.ndarray,
    current: Policy | None = None,
    _discrete: _Discrete | None = None,
) -> Policy:
    """Greedy policy for ``v``: ``k_j`` = walk minimiser of ``F_j``.

    With ``current``, a vertex keeps its current choice unless the walk
    finds a strictly smaller value; this makes successive policy iterates
    monotone even where the walk misses the current minimiser.
    """
    d = _discrete if _discrete is not None else p.discretize(m)
    vals = v.values if isinstance(v, NodeField) else np.asarray(v, dtype=np.float64)
    q, res = _bellman(d, seeds, vals)
    k = res.argmin.copy()
    if d.bvals is not None:
        stop = d.bvals <= q
        k[stop] = STOP
        q = np.where(stop, d.bvals, q)
    if current is not None:
        j = np.arange(m.n_vertices)
        old = current.k
        kk = np.where(old == STOP, j, old)
        q_old = d.objective(vals, j, kk)
        if d.bvals is not None:
            q_old = np.where(old == STOP, d.bvals, q_old)
        keep = q_old <= q
        k[keep] = old[keep]
    return Policy(k)


@numba.njit(cache=True)
def _functional_graph_solve(k, c, beta, stop_val):
    """Solve ``v_j - beta v_{k_j} = c_j`` (``v_j = stop_val_j`` if ``k_j < 0``).

    Each row couples to one column, so the map j -> k_j is a functional
    graph: trees hanging off cycles. Cycles are solved in closed form and
    trees by back-substitution, in O(N).
    """
    n = k.shape[0]
    v = np.empty(n)
    state = np.zeros(n, dtype=np.int8)
    path = np.empty(n, dtype=np.int64)
    for s in range(n):
        if state[s] != 0:
            continue
        plen = 0
        u = s
        while u >= 0 and state[u] == 0:
            state[u] = 1
            path[plen] = u
            plen += 1
            u = k[u]
        if u >= 0 and state[u] == 1:
            pos = plen - 1
            while path[pos] != u:
                pos -= 1
            total = 0.0
            pw = 1.0
            for i in range(pos, plen):
                total += pw * c[path[i]]
                pw *= beta
            v[u] = total / (1.0 - pw)
            state[u] = 2
            for i in range(plen - 1, pos, -1):
                w = path[i]
                v[w] = c[w] + beta * v[k[w]]
                state[w] = 2
            plen = pos
        for i in range(plen - 1, -1, -1):
            w = path[i]
            if k[w] < 0:
                v[w] = stop_val[w]
            else:
                v[w] = c[w] + beta * v[k[w]]
            state[w] = 2
    return v


def policy_evaluation_exact(
    p: StationaryProblem, m: Mesh, pol: Policy, _discrete: _Discrete | None = None
) -> NodeField:
    """Exact value of a fixed policy (direct solve of the linear system)."""
    d = _discrete if _discrete is not None else p.discretize(m)
    if np.any(pol.k >= m.n_vertices) or np.any(pol.k < STOP):
        raise ValueError("policy index out of range")
    if np.any(pol.k == STOP) and d.bvals is None:
        raise ValueError("STOP entries need boundary data")
    stop_val = d.bvals if d.bvals is not None else np.zeros(m.n_vertices)
    v = _functional_graph_solve(pol.k, d.costs(pol.k), p.beta, stop_val)
    return NodeField(v, 0, p.dt, argmin=pol.k)


def iterative_policy_evaluation(
    p: StationaryProblem,
    m: Mesh,
    pol: Policy,
    v0: np.ndarray | float = 1.0,
    inner_tol: float = 1e-12,
    max_inner: int = 1_000_000,
    _discrete: _Discrete | None = None,
) -> tuple[NodeField, int]:
    """Fixed-policy sweeps ``v <- c + beta v[k]`` until the update is
    below ``inner_tol``; the error contracts by ``beta`` per sweep."""
    d = _discrete if _discrete is not None else p.discretize(m)
    c = d.costs(pol.k)
    stop = pol.k == STOP
    kk = np.where(stop, 0, pol.k)
    v = _initial(v0, m.n_vertices)
    for it in range(1, max_inner + 1):
        new = c + p.beta * v[kk]
        if stop.any():
            new[stop] = d.bvals[stop]
        diff = float(np.max(np.abs(new - v)))
        v = new
        if diff < inner_tol:
            return NodeField(v, it, p.dt, argmin=pol.k), it
    raise ConvergenceError("policy evaluation did not converge", diff, NodeField(v, max_inner, p.dt))


def _policy_loop(p, m, seeds, pol0, max_iter, evaluate) -> StationaryResult:
    d = p.discretize(m)
    pol = pol0 if pol0 is not None else Policy.self_loop(m.n_vertices)
    prev = None
    max_increase = -np.inf
    for it in range(1, max_iter + 1):
        v = evaluate(pol, prev, d)
        if prev is not None:
            max_increase = max(max_increase, float(np.max(v.values - prev.values)))
        new = policy_improvement(p, m, seeds, v, current=pol, _discrete=d)
        prev = v
        if new == pol:
            v.step_index = it
            v.stats = {"max_increase": max_increase}
            return StationaryResult(v, pol, it)
        pol = new
    raise ConvergenceError(f"policy iteration did not converge in {max_iter} iterations",
                           float(np.sum(new.k != pol.k)), prev)


def policy_iteration(
    p: StationaryProblem,
    m: Mesh,
    seeds: SeedTable,
    pol0: Policy | None = None,
    max_iter: int = 500,
) -> StationaryResult:
    """Exact policy iteration, stopped when the policy no longer changes.

    ``result.field.stats["max_increase"]`` is the largest elementwise
    increase between consecutive evaluations (nonpositive for monotone
    iterates).
    """

    def evaluate(pol, prev, d):
        return policy_evaluation_exact(p, m, pol, _discrete=d)

    return _policy_loop(p, m, seeds, pol0, max_iter, evaluate)


def modified_policy_iteration(
    p: StationaryProblem,
    m: Mesh,
    seeds: SeedTable,
    pol0: Policy | None = None,
    inner_tol: float = 1e-12,
    max_iter: int = 500,
    v0: float = 1.0,
) -> StationaryResult:
    """Policy iteration with iterative evaluation warm-started from the
    previous value."""
    if not inner_tol > 0:
        raise ValueError("inner_tol must be positive")
    inner_counts = []

    def evaluate(pol, prev, d):
        start = prev.values if prev is not None else v0
        v, n = iterative_policy_evaluation(p, m, pol, start, inner_tol, _discrete=d)
        inner_counts.append(n)
        return v

    res = _policy_loop(p, m, seeds, pol0, max_iter, evaluate)
    res.field.stats["inner_iterations"] = inner_counts
    return res
