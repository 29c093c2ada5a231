"""Unstructured triangular meshes described by vertices, triangles and
triangle-neighbour connectivity only.

Everything the solvers need is stored in :class:`Mesh`; the vertex
adjacency is never materialised and is recovered on demand by rotating
around a vertex through ``tri_neighbors``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np
from scipy.spatial import cKDTree

logger = logging.getLogger(__name__)

NONE = -1
#: Seed directions e_1..e_4, in this fixed order.
DIRECTIONS = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])


class MeshError(ValueError):
    """Raised for malformed mesh files or connectivity."""


# --------------------------------------------------------------------------
# rotation kernel (shared with the sweep kernels)
# --------------------------------------------------------------------------


@numba.njit(cache=True)
def _local_index(tri, v):
    if tri[0] == v:
        return 0
    if tri[1] == v:
        return 1
    if tri[2] == v:
        return 2
    return -1


@numba.njit(cache=True)
def rotate_neighbors(v, triangles, tri_neighbors, incident_tri, out):
    """Write the vertex neighbours of ``v`` into ``out``; return the count.

    Returns -1 when the rotation does not close or terminate, which only
    happens with corrupted connectivity.
    """
    limit = out.shape[0]
    t0 = incident_tri[v]
    n = 0
    t = t0
    # counter-clockwise: collect the vertex following v in each triangle
    while True:
        i = _local_index(triangles[t], v)
        if i < 0:
            return -1
        if n >= limit:
            return -1
        out[n] = triangles[t, (i + 1) % 3]
        n += 1
        nxt = tri_neighbors[t, (i + 1) % 3]
        if nxt == t0:
            return n
        if nxt < 0:
            if n >= limit:
                return -1
            out[n] = triangles[t, (i + 2) % 3]
            n += 1
            break
        t = nxt
    # open fan: go clockwise from the anchor until the other boundary edge
    i0 = _local_index(triangles[t0], v)
    t = tri_neighbors[t0, (i0 + 2) % 3]
    while t >= 0:
        i = _local_index(triangles[t], v)
        if i < 0 or t == t0:
            return -1
        if n >= limit:
            return -1
        # the vertex shared with the previous triangle is already listed
        out[n] = triangles[t, (i + 1) % 3]
        n += 1
        t = tri_neighbors[t, (i + 2) % 3]
    return n


@numba.njit(cache=True)
def _rotation_degrees(triangles, tri_neighbors, incident_tri, n_vertices, limit):
    deg = np.empty(n_vertices, dtype=np.int64)
    buf = np.empty(limit, dtype=np.int64)
    for v in range(n_vertices):
        deg[v] = rotate_neighbors(v, triangles, tri_neighbors, incident_tri, buf)
    return deg


# --------------------------------------------------------------------------
# Mesh
# --------------------------------------------------------------------------


def _signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p0 = vertices[triangles[:, 0]]
    p1 = vertices[triangles[:, 1]]
    p2 = vertices[triangles[:, 2]]
    return 0.5 * (
        (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
        - (p1[:, 1] - p0[:, 1]) * (p2[:, 0] - p0[:, 0])
    )


def _edges_opposite(triangles: np.ndarray) -> np.ndarray:
    """(3T, 2) sorted vertex pairs; row 3t+d is the edge opposite local d."""
    a = triangles[:, [1, 2, 0]]
    b = triangles[:, [2, 0, 1]]
    e = np.stack([np.minimum(a, b), np.maximum(a, b)], axis=-1)
    return e.reshape(-1, 2)


def neighbors_from_edges(triangles: np.ndarray) -> np.ndarray:
    """Reconstruct triangle neighbours from shared edges.

    Raises :class:`MeshError` on an edge shared by more than two triangles.
    """
    n_tri = len(triangles)
    edges = _edges_opposite(triangles)
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    se = edges[order]
    same = np.all(se[1:] == se[:-1], axis=1)
    if np.any(same[1:] & same[:-1]):
        k = int(np.flatnonzero(same[1:] & same[:-1])[0])
        raise MeshError(f"non-manifold edge {tuple(se[k])}: more than two triangles")
    tn = np.full(3 * n_tri, NONE, dtype=np.int64)
    first = order[:-1][same]
    second = order[1:][same]
    tn[first] = second // 3
    tn[second] = first // 3
    return tn.reshape(n_tri, 3)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangular mesh with triangle-neighbour connectivity.

    ``tri_neighbors[t, d]`` is the triangle across the edge opposite local
    vertex ``d`` of triangle ``t`` or :data:`NONE`. Use :meth:`from_arrays`
    to build one; it orients, validates and fills the derived fields.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    tri_neighbors: np.ndarray
    incident_tri: np.ndarray
    boundary: np.ndarray
    h_max: float

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @classmethod
    def from_arrays(
        cls,
        vertices,
        triangles,
        tri_neighbors=None,
        markers=None,
    ) -> "Mesh":
        vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshError("vertices must be an (N, 2) array")
        n = len(vertices)
        if len(triangles) == 0:
            raise MeshError("mesh has no triangles")
        if triangles.min() < 0 or triangles.max() >= n:
            raise MeshError("triangle vertex index out of range")
        if np.any(
            (triangles[:, 0] == triangles[:, 1])
            | (triangles[:, 1] == triangles[:, 2])
            | (triangles[:, 0] == triangles[:, 2])
        ):
            raise MeshError("triangle with repeated vertex")

        if tri_neighbors is not None:
            tri_neighbors = np.array(tri_neighbors, dtype=np.int64).reshape(-1, 3)
            if tri_neighbors.shape != triangles.shape:
                raise MeshError("neighbour list does not match triangle list")
            tri_neighbors[tri_neighbors < 0] = NONE
            if tri_neighbors.max() >= len(triangles):
                raise MeshError("triangle neighbour index out of range")

        area = _signed_areas(vertices, triangles)
        if np.any(area == 0.0):
            bad = int(np.flatnonzero(area == 0.0)[0])
            raise MeshError(f"degenerate triangle {bad}: orientation cannot be repaired")
        flip = area < 0
        if np.any(flip):
            logger.debug("flipping %d clockwise triangles", int(flip.sum()))
            triangles[flip] = triangles[flip][:, [0, 2, 1]]
            if tri_neighbors is not None:
                tri_neighbors[flip] = tri_neighbors[flip][:, [0, 2, 1]]

        rebuilt = neighbors_from_edges(triangles)
        if tri_neighbors is None:
            tri_neighbors = rebuilt
        elif not np.array_equal(tri_neighbors, rebuilt):
            raise MeshError("neighbour list inconsistent with shared edges")

        # oriented edges must be traversed once in each direction
        a = triangles.ravel()
        b = triangles[:, [1, 2, 0]].ravel()
        key = a * n + b
        if len(np.unique(key)) != len(key):
            raise MeshError("inconsistent triangle orientation (overlapping triangles)")

        incident = np.full(n, NONE, dtype=np.int64)
        tri_ids = np.repeat(np.arange(len(triangles)), 3)
        incident[triangles.ravel()[::-1]] = tri_ids[::-1]
        if np.any(incident < 0):
            v = int(np.flatnonzero(incident < 0)[0])
            raise MeshError(f"vertex {v} belongs to no triangle")

        edges = _edges_opposite(triangles)
        open_edges = edges[(tri_neighbors.ravel() == NONE)]
        boundary = np.zeros(n, dtype=bool)
        boundary[open_edges.ravel()] = True
        if markers is not None:
            markers = np.asarray(markers)
            flagged = markers != 0
            if np.any(flagged != boundary):
                logger.warning(
                    "%d boundary markers disagree with mesh topology; using topology",
                    int(np.sum(flagged != boundary)),
                )
        p = vertices[edges[:, 0]] - vertices[edges[:, 1]]
        h_max = float(np.sqrt(np.max(np.einsum("ij,ij->i", p, p))))

        mesh = cls(vertices, triangles, tri_neighbors, incident, boundary, h_max)
        valence = np.bincount(triangles.ravel(), minlength=n)
        expect = valence + boundary.astype(np.int64)
        deg = _rotation_degrees(triangles, tri_neighbors, incident, n, int(expect.max()) + 1)
        if np.any(deg != expect):
            v = int(np.flatnonzero(deg != expect)[0])
            raise MeshError(f"rotation around vertex {v} does not close (non-manifold vertex)")
        for arr in (vertices, triangles, tri_neighbors, incident, boundary):
            arr.setflags(write=False)
        return mesh

    def vertex_neighbors(self, v: int) -> list[int]:
        return vertex_neighbors(self, v)

    def edges(self) -> np.ndarray:
        """Unique undirected edges as a sorted (E, 2) array."""
        return np.unique(_edges_opposite(self.triangles), axis=0)

    def max_degree(self) -> int:
        valence = np.bincount(self.triangles.ravel(), minlength=self.n_vertices)
        return int((valence + self.boundary).max())


def vertex_neighbors(m: Mesh, v: int) -> list[int]:
    """Vertices sharing an edge with ``v``, found by rotating through
    ``tri_neighbors`` starting at ``incident_tri[v]``."""
    if not 0 <= v < m.n_vertices:
        raise IndexError(f"vertex {v} out of range")
    buf = np.empty(m.max_degree() + 1, dtype=np.int64)
    k = rotate_neighbors(v, m.triangles, m.tri_neighbors, m.incident_tri, buf)
    if k < 0:
        raise MeshError(f"corrupted connectivity around vertex {v}")
    return [int(x) for x in buf[:k]]


# --------------------------------------------------------------------------
# seed table
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SeedTable:
    """``seeds[d, j]`` is the vertex nearest to ``x_j + C*dt*e_d``."""

    seeds: np.ndarray
    displacement: float


def nearest_vertices(m: Mesh, points: np.ndarray, k: int = 8) -> np.ndarray:
    """Nearest mesh vertex for each point, ties to the lowest index."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    tree = cKDTree(m.vertices)
    k = min(k, m.n_vertices)
    _, idx = tree.query(points, k=k)
    idx = idx.reshape(len(points), k)
    diff = m.vertices[idx] - points[:, None, :]
    d2 = diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1]
    dmin = d2.min(axis=1)
    # any row whose k-th candidate still ties the minimum needs a full check
    full = (d2[:, -1] <= dmin) & (k < m.n_vertices)
    cand = np.where(d2 == dmin[:, None], idx, np.iinfo(np.int64).max)
    out = cand.min(axis=1)
    for r in np.flatnonzero(full):
        diff = m.vertices - points[r]
        d2r = diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1]
        out[r] = int(np.argmin(d2r))
    return out.astype(np.int64)


def build_seed_table(m: Mesh, c_coef: float, dt: float) -> SeedTable:
    if c_coef <= 0 or dt <= 0:
        raise ValueError("seed displacement coefficient and dt must be positive")
    step = c_coef * dt
    pts = m.vertices[None, :, :] + step * DIRECTIONS[:, None, :]
    seeds = nearest_vertices(m, pts.reshape(-1, 2)).reshape(4, m.n_vertices)
    seeds.setflags(write=False)
    return SeedTable(seeds, step)


# --------------------------------------------------------------------------
# disc generator
# --------------------------------------------------------------------------

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@numba.njit(cache=True)
def _stitch_rings(pts, a0, na, b0, nb, j0, out, pos):
    """Triangulate the annular strip between two closed vertex rings.

    The inner ring is ``a0 .. a0+na-1``, the outer ``b0 .. b0+nb-1`` with
    ``j0`` the outer vertex facing ``a0``. Writes ``na + nb`` triangles into
    ``out`` starting at row ``pos``; returns the next free row.
    """
    i = 0
    j = 0
    while i < na or j < nb:
        ai = a0 + i % na
        bj = b0 + (j0 + j) % nb
        if i == na:
            advance_a = False
        elif j == nb:
            advance_a = True
        else:
            an = a0 + (i + 1) % na
            bn = b0 + (j0 + j + 1) % nb
            da = (pts[an, 0] - pts[bj, 0]) ** 2 + (pts[an, 1] - pts[bj, 1]) ** 2
            db = (pts[bn, 0] - pts[ai, 0]) ** 2 + (pts[bn, 1] - pts[ai, 1]) ** 2
            advance_a = da < db
        out[pos, 0] = ai
        out[pos, 1] = bj
        if advance_a:
            out[pos, 2] = a0 + (i + 1) % na
            i += 1
        else:
            out[pos, 2] = b0 + (j0 + j + 1) % nb
            j += 1
        pos += 1
    return pos


def gen_disc_mesh(radius: float, h: float, jitter: float = 0.0, seed: int = 0) -> Mesh:
    """Ring-based quasi-uniform triangulation of the disc ``|x| <= radius``.

    Ring ``m`` sits at radius ``m * radius / M`` (``M = round(radius / h)``)
    and carries ``round(2*pi*m)`` vertices; consecutive rings are stitched
    by always taking the shorter diagonal.

    ``jitter`` (fraction of the ring spacing, at most 0.3) perturbs every
    vertex radially and along its ring with a seeded generator; boundary
    vertices only move along the circle. It breaks the exact radial
    alignment of the rings, which otherwise aliases with radially
    symmetric data.
    """
    if not 0 <= jitter <= 0.3:
        raise ValueError("jitter must lie in [0, 0.3]")
    if not radius > 0 or not 0 < h <= radius:
        raise ValueError("need radius > 0 and 0 < h <= radius")
    n_rings = max(1, int(round(radius / h)))
    counts = [max(6, int(round(2 * math.pi * m))) for m in range(1, n_rings + 1)]
    total = 1 + sum(counts)
    if total > 50_000_000:
        raise MemoryError(f"disc mesh with {total} vertices is too large")
    pts = np.zeros((total, 2))
    starts = []
    theta0 = []
    start = 1
    rng = np.random.default_rng(seed)
    dr = radius / n_rings
    if jitter:
        pts[0] = rng.uniform(-jitter * dr, jitter * dr, size=2)
    for m, nm in enumerate(counts, start=1):
        offset = ((m * _GOLDEN) % 1.0) * 2 * math.pi / nm
        theta = offset + 2 * math.pi * np.arange(nm) / nm
        r = np.full(nm, radius * m / n_rings)
        if jitter:
            theta += rng.uniform(-jitter, jitter, nm) * 2 * math.pi / nm
            if m < n_rings:
                r += rng.uniform(-jitter, jitter, nm) * dr
        pts[start : start + nm, 0] = r * np.cos(theta)
        pts[start : start + nm, 1] = r * np.sin(theta)
        starts.append(start)
        theta0.append(offset)
        start += nm
    n_tri = counts[0] + sum(counts[1:]) + sum(counts[:-1])
    tris = np.empty((n_tri, 3), dtype=np.int64)
    n1 = counts[0]
    tris[:n1, 0] = 0
    tris[:n1, 1] = 1 + np.arange(n1)
    tris[:n1, 2] = 1 + (np.arange(n1) + 1) % n1
    pos = n1
    for k in range(1, n_rings):
        na, nb = counts[k - 1], counts[k]
        # outer vertex whose angle is closest to the first inner vertex
        rel = (theta0[k - 1] - theta0[k]) * nb / (2 * math.pi)
        j0 = int(round(rel)) % nb
        pos = _stitch_rings(pts, starts[k - 1], na, starts[k], nb, j0, tris, pos)
    return Mesh.from_arrays(pts, tris[:pos])


def disc_mesh_for_dx(radius: float, dx: float, jitter: float = 0.0, seed: int = 0,
                     max_tries: int = 8) -> Mesh:
    """Disc mesh whose measured maximum element diameter is close to, and
    not above, ``dx``."""
    h = dx
    mesh = gen_disc_mesh(radius, h, jitter, seed)
    for _ in range(max_tries):
        ratio = mesh.h_max / h
        h_new = 0.999 * dx / ratio
        if mesh.h_max <= dx and abs(h_new - h) < 1e-3 * h:
            break
        h = h_new
        mesh = gen_disc_mesh(radius, h, jitter, seed)
    while mesh.h_max > dx:
        h *= 0.99
        mesh = gen_disc_mesh(radius, h, jitter, seed)
    return mesh


# --------------------------------------------------------------------------
# Triangle ASCII formats
# --------------------------------------------------------------------------


def _data_lines(path: Path):
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if line:
                yield line.split()


def _read_table(path: Path, label: str):
    lines = _data_lines(Path(path))
    try:
        header = next(lines)
    except StopIteration:
        raise MeshError(f"{label} file {path} is empty") from None
    rows = list(lines)
    try:
        head = [int(x) for x in header]
    except ValueError:
        raise MeshError(f"malformed {label} header: {' '.join(header)}") from None
    if not head or head[0] < 0 or len(rows) < head[0]:
        raise MeshError(f"malformed {label} header or truncated file: {' '.join(header)}")
    return head, rows[: head[0]]


def read_node(path) -> tuple[np.ndarray, np.ndarray | None, int]:
    """Read a Triangle ``.node`` file.

    Returns ``(vertices, markers, base)`` where ``base`` is the index of the
    first vertex as declared by the file (0 or 1).
    """
    head, rows = _read_table(path, ".node")
    if len(head) < 4:
        head = head + [0] * (4 - len(head))
    count, dim, n_attr, has_marker = head[:4]
    if dim != 2:
        raise MeshError(f".node dimension must be 2, got {dim}")
    try:
        idx = np.array([int(r[0]) for r in rows], dtype=np.int64)
        xy = np.array([[float(r[1]), float(r[2])] for r in rows])
        markers = (
            np.array([int(r[3 + n_attr]) for r in rows]) if has_marker else None
        )
    except (ValueError, IndexError):
        raise MeshError(f"malformed .node record in {path}") from None
    if count == 0:
        raise MeshError(".node file declares no vertices")
    base = int(idx[0])
    if base not in (0, 1) or not np.array_equal(idx, np.arange(base, base + count)):
        raise MeshError(".node indices must be consecutive from 0 or 1")
    return xy, markers, base


def read_ele(path, base: int) -> np.ndarray:
    head, rows = _read_table(path, ".ele")
    if len(head) < 2 or head[1] != 3:
        raise MeshError(".ele must declare 3 nodes per triangle")
    try:
        tris = np.array([[int(r[1]), int(r[2]), int(r[3])] for r in rows], dtype=np.int64)
    except (ValueError, IndexError):
        raise MeshError(f"malformed .ele record in {path}") from None
    return tris - base


def read_neigh(path, base: int) -> np.ndarray:
    head, rows = _read_table(path, ".neigh")
    if len(head) < 2 or head[1] != 3:
        raise MeshError(".neigh must declare 3 neighbours per triangle")
    try:
        tn = np.array([[int(r[1]), int(r[2]), int(r[3])] for r in rows], dtype=np.int64)
    except (ValueError, IndexError):
        raise MeshError(f"malformed .neigh record in {path}") from None
    return np.where(tn < 0, NONE, tn - base)


def load_triangle_mesh(node_path, ele_path, neigh_path=None) -> Mesh:
    """Load a mesh from Triangle's ``.node``/``.ele`` (and optional
    ``.neigh``) files, converting to 0-based indices."""
    xy, markers, base = read_node(node_path)
    tris = read_ele(ele_path, base)
    tn = read_neigh(neigh_path, base) if neigh_path is not None else None
    if tn is not None and len(tn) != len(tris):
        raise MeshError(".neigh and .ele triangle counts differ")
    return Mesh.from_arrays(xy, tris, tn, markers)


def write_triangle_mesh(m: Mesh, prefix, base: int = 1) -> tuple[Path, Path, Path]:
    """Write ``prefix.node``, ``prefix.ele`` and ``prefix.neigh``."""
    prefix = Path(prefix)
    paths = tuple(prefix.with_name(prefix.name + ext) for ext in (".node", ".ele", ".neigh"))
    with open(paths[0], "w") as fh:
        fh.write(f"{m.n_vertices} 2 0 1\n")
        for i, ((x, y), b) in enumerate(zip(m.vertices, m.boundary)):
            fh.write(f"{i + base} {float(x)!r} {float(y)!r} {int(b)}\n")
    with open(paths[1], "w") as fh:
        fh.write(f"{m.n_triangles} 3 0\n")
        for i, t in enumerate(m.triangles):
            fh.write(f"{i + base} {t[0] + base} {t[1] + base} {t[2] + base}\n")
    with open(paths[2], "w") as fh:
        fh.write(f"{m.n_triangles} 3\n")
        for i, t in enumerate(m.tri_neighbors):
            nb = [int(x) + base if x >= 0 else -1 for x in t]
            fh.write(f"{i + base} {nb[0]} {nb[1]} {nb[2]}\n")
    return paths
