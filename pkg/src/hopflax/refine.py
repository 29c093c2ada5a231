"""Least-squares quadratic refinement of a node minimum.

The objective is sampled on the minimising vertex and its neighbours, a
quadratic ``Q(y) = 1/2 y^T A y - b^T y + c`` is fitted through the normal
equations, and its closed-form minimum replaces the node value when the
fit is trustworthy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import Mesh, rotate_neighbors, vertex_neighbors
from .walker import Objective, WalkResult

#: Normal matrices with a larger condition number are rejected.
COND_LIMIT = 1e12


@dataclass(frozen=True)
class QuadraticModel:
    """Quadratic in local coordinates ``xi = (y - origin) / scale``.

    ``accepted`` is False when the fit was rejected (fewer than six points,
    numerically singular normal matrix, or indefinite Hessian); ``reason``
    then says why.
    """

    a11: float
    a12: float
    a22: float
    b1: float
    b2: float
    c: float
    stencil_size: int = 6
    origin: tuple[float, float] = (0.0, 0.0)
    scale: float = 1.0
    accepted: bool = True
    reason: str = ""
    residual: float = field(default=0.0, compare=False)

    @property
    def positive_definite(self) -> bool:
        return self.a11 > 0 and self.a11 * self.a22 - self.a12**2 > 0

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        xi = (y - np.asarray(self.origin)) / self.scale
        x1, x2 = xi[..., 0], xi[..., 1]
        return (
            0.5 * self.a11 * x1 * x1 + self.a12 * x1 * x2 + 0.5 * self.a22 * x2 * x2
            - self.b1 * x1 - self.b2 * x2 + self.c
        )

    def global_coefficients(self) -> tuple[float, float, float, float, float, float]:
        """Coefficients ``(a11, a12, a22, b1, b2, c)`` in original coordinates."""
        s = self.scale
        o = np.asarray(self.origin, dtype=np.float64)
        a = np.array([[self.a11, self.a12], [self.a12, self.a22]]) / s**2
        b = a @ o + np.array([self.b1, self.b2]) / s
        c = 0.5 * o @ a @ o + np.array([self.b1, self.b2]) @ o / s + self.c
        return a[0, 0], a[0, 1], a[1, 1], b[0], b[1], float(c)


def design_matrix(xi: np.ndarray) -> np.ndarray:
    """Rows ``(xi1^2/2, xi1*xi2, xi2^2/2, -xi1, -xi2, 1)``; works on stacks."""
    x1, x2 = xi[..., 0], xi[..., 1]
    return np.stack(
        [0.5 * x1 * x1, x1 * x2, 0.5 * x2 * x2, -x1, -x2, np.ones_like(x1)], axis=-1
    )


def _rejected(m: int, origin, scale, reason: str) -> QuadraticModel:
    return QuadraticModel(0, 0, 0, 0, 0, 0, m, origin, scale, False, reason)


def fit_quadratic(points, values, origin=None, scale=None) -> QuadraticModel:
    """Least-squares quadratic through ``(points[l], values[l])``.

    Coordinates are shifted to ``origin`` (default: the first point, i.e.
    the minimising node) and divided by ``scale`` (default: the largest
    distance from the origin) before the normal equations are assembled.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    f = np.asarray(values, dtype=np.float64).ravel()
    m = len(pts)
    o = pts[0] if origin is None else np.asarray(origin, dtype=np.float64)
    o_t = (float(o[0]), float(o[1]))
    if scale is None:
        scale = float(np.max(np.linalg.norm(pts - o, axis=1))) or 1.0
    if m < 6:
        return _rejected(m, o_t, scale, "fewer than six stencil points")
    phi = design_matrix((pts - o) / scale)
    g = phi.T @ phi
    if np.linalg.cond(g) > COND_LIMIT:
        return _rejected(m, o_t, scale, "singular normal equations")
    a = np.linalg.solve(g, phi.T @ f)
    res = float(np.linalg.norm(phi @ a - f))
    model = QuadraticModel(*map(float, a), m, o_t, scale, True, "", res)
    if not model.positive_definite:
        return QuadraticModel(*map(float, a), m, o_t, scale, False, "indefinite Hessian", res)
    return model


def quadratic_min(model: QuadraticModel) -> float:
    """Closed-form minimum value of an accepted (positive definite) model."""
    a11, a12, a22, b1, b2, c = model.a11, model.a12, model.a22, model.b1, model.b2, model.c
    return (a22 * b1**2 - 2 * a12 * b1 * b2 + a11 * b2**2) / (2 * (a12**2 - a11 * a22)) + c


def _local_argmin(model: QuadraticModel) -> np.ndarray:
    a = np.array([[model.a11, model.a12], [model.a12, model.a22]])
    return np.linalg.solve(a, [model.b1, model.b2])


def quadratic_argmin(model: QuadraticModel) -> np.ndarray:
    """Minimiser ``A^{-1} b`` mapped back to original coordinates."""
    return np.asarray(model.origin) + model.scale * _local_argmin(model)


def minimiser_within(model: QuadraticModel, reach: float) -> bool:
    """True when the model's minimiser lies within squared local distance
    ``reach`` of the model origin.

    The walk stops at a node that beats all its neighbours, so a fit whose
    minimiser lies beyond the stencil is extrapolating (typically a nearly
    flat direction) and is not trusted.
    """
    xi = _local_argmin(model)
    return float(xi @ xi) <= reach


@dataclass(frozen=True, eq=False)
class StencilTable:
    """Per-vertex stencils and their cached least-squares operators.

    The stencil of ``v`` is ``idx[ptr[v]:ptr[v+1]]`` (``v`` first, then its
    neighbours). ``pinv`` holds ``(Phi^T Phi)^{-1} Phi^T`` for each vertex
    as a flattened 6 x M block, built with coordinates shifted to ``x_v``
    and divided by ``scale``. ``ok[v]`` is False for stencils that can
    never be fitted (too few points or ill-conditioned). ``reach[v]`` is
    the largest squared distance from ``x_v`` to a stencil point, in the
    same scaled coordinates.
    """

    ptr: np.ndarray
    idx: np.ndarray
    ok: np.ndarray
    pinv: np.ndarray
    scale: float
    reach: np.ndarray

    def operator(self, v: int) -> np.ndarray:
        lo, hi = self.ptr[v], self.ptr[v + 1]
        return self.pinv[6 * lo : 6 * hi].reshape(6, hi - lo)

    def stencil(self, v: int) -> np.ndarray:
        return self.idx[self.ptr[v] : self.ptr[v + 1]]


def build_stencil_table(m: Mesh, scale: float | None = None) -> StencilTable:
    scale = m.h_max if scale is None else scale
    lists = _all_stencils(m)
    sizes = np.array([len(s) for s in lists], dtype=np.int64)
    ptr = np.concatenate([[0], np.cumsum(sizes)])
    idx = np.fromiter((k for s in lists for k in s), dtype=np.int64, count=int(ptr[-1]))
    ok = np.zeros(m.n_vertices, dtype=bool)
    pinv = np.zeros(6 * int(ptr[-1]))
    reach = np.zeros(m.n_vertices)
    for size in np.unique(sizes):
        if size < 6:
            continue
        vs = np.flatnonzero(sizes == size)
        cols = ptr[vs][:, None] + np.arange(size)
        st = idx[cols]
        xi = (m.vertices[st] - m.vertices[vs][:, None, :]) / scale
        reach[vs] = np.max(np.sum(xi**2, axis=2), axis=1)
        phi = design_matrix(xi)
        g = np.einsum("bmi,bmj->bij", phi, phi)
        good = np.linalg.cond(g) <= COND_LIMIT
        ok[vs[good]] = True
        if not good.any():
            continue
        ops = np.linalg.solve(g[good], np.swapaxes(phi[good], 1, 2))
        pos = 6 * ptr[vs[good]][:, None] + np.arange(6 * size)
        pinv[pos] = ops.reshape(len(ops), -1)
    return StencilTable(ptr, idx, ok, pinv, scale, reach)


def _all_stencils(m: Mesh) -> list[list[int]]:
    buf = np.empty(m.max_degree() + 1, dtype=np.int64)
    out = []
    for v in range(m.n_vertices):
        k = rotate_neighbors(v, m.triangles, m.tri_neighbors, m.incident_tri, buf)
        out.append([v, *buf[:k].tolist()])
    return out


def refine_minimum(
    m: Mesh,
    objective: Objective,
    walk: WalkResult,
    stencils: StencilTable | None = None,
    clamp: bool = True,
    with_status: bool = False,
):
    """Refined minimum of ``objective`` around the walk's minimising node.

    Returns ``walk.min_value`` unchanged when that node is on the boundary,
    the fit is rejected or its minimiser lies outside the stencil. With ``clamp`` the result never exceeds the
    node value. With ``with_status`` a ``(value, accepted)`` pair is
    returned.
    """
    k = walk.argmin_index
    raw = walk.min_value
    value, accepted = raw, False
    if not m.boundary[k]:
        if stencils is not None:
            if stencils.ok[k]:
                st = stencils.stencil(k)
                f = np.array([objective(int(i)) for i in st])
                a = stencils.operator(k) @ f
                xk = m.vertices[k]
                model = QuadraticModel(*map(float, a), len(st), (xk[0], xk[1]), stencils.scale)
                if model.positive_definite and minimiser_within(model, stencils.reach[k]):
                    value, accepted = quadratic_min(model), True
        else:
            st = [k, *vertex_neighbors(m, k)]
            f = [objective(i) for i in st]
            model = fit_quadratic(m.vertices[st], f, origin=m.vertices[k], scale=m.h_max)
            reach = np.max(np.sum(((m.vertices[st] - m.vertices[k]) / m.h_max) ** 2, axis=1))
            if model.accepted and minimiser_within(model, reach):
                value, accepted = quadratic_min(model), True
        if accepted and clamp:
            value = min(value, raw)
    return (value, accepted) if with_status else value
