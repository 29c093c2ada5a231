"""Generate the flower-with-holes Triangle fixture (run once, output committed).

    python tests/fixtures/make_flower.py

The domain is ``r < R0 (1 + A cos 5 theta)`` minus a few disjoint discs.
Boundary curves are sampled at spacing ``H``, the interior is filled with
a jittered hexagonal lattice, and scipy's Delaunay triangulation is cut
back to the domain by triangle centroids. The script checks that the
boundary of the result is exactly the set of sampled curves.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from hopflax.mesh import Mesh, write_triangle_mesh

R0, A, PETALS = 1.5, 0.3, 5
HOLES = [((0.0, 0.0), 0.30), ((0.7, 0.25), 0.18), ((-0.4, 0.65), 0.14),
         ((-0.55, -0.6), 0.20), ((0.35, -0.85), 0.12)]
H = 0.06
SEED = 7


def flower_radius(theta):
    return R0 * (1 + A * np.cos(PETALS * theta))


def inside(p: np.ndarray, margin: float = 0.0) -> np.ndarray:
    r = np.hypot(p[:, 0], p[:, 1])
    th = np.arctan2(p[:, 1], p[:, 0])
    ok = r < flower_radius(th) - margin
    for (cx, cy), rad in HOLES:
        ok &= np.hypot(p[:, 0] - cx, p[:, 1] - cy) > rad + margin
    return ok


def _curve(fn, spacing=H):
    """Points on a closed curve at arc-length spacing about ``spacing``."""
    t = np.linspace(0, 2 * np.pi, 20000, endpoint=False)
    xy = fn(t)
    seg = np.linalg.norm(np.diff(np.vstack([xy, xy[:1]]), axis=0), axis=1)
    s = np.concatenate([[0], np.cumsum(seg)])
    n = max(8, int(round(s[-1] / spacing)))
    targets = np.arange(n) * s[-1] / n
    tt = np.interp(targets, s, np.append(t, 2 * np.pi))
    return fn(tt)


def build() -> Mesh:
    rng = np.random.default_rng(SEED)
    fns = [lambda t: np.column_stack([flower_radius(t) * np.cos(t), flower_radius(t) * np.sin(t)])]
    for (cx, cy), rad in HOLES:
        fns.append(lambda t, cx=cx, cy=cy, rad=rad: np.column_stack(
            [cx + rad * np.cos(t), cy + rad * np.sin(t)]))
    curves = [_curve(fn) for fn in fns]
    dense = cKDTree(np.vstack([_curve(fn, H / 20) for fn in fns]))
    bnd = np.vstack(curves)
    ext = R0 * (1 + A) + H
    ys = np.arange(-ext, ext, H * np.sqrt(3) / 2)
    lattice = [np.column_stack([np.arange(-ext, ext, H) + (i % 2) * H / 2, np.full_like(
        np.arange(-ext, ext, H), y)]) for i, y in enumerate(ys)]
    pts = np.vstack(lattice)
    pts += rng.uniform(-0.15 * H, 0.15 * H, pts.shape)
    pts = pts[inside(pts) & (dense.query(pts)[0] > 0.6 * H)]
    allp = np.vstack([bnd, pts])
    tri = Delaunay(allp).simplices
    cent = allp[tri].mean(axis=1)
    tri = tri[inside(cent)]
    used = np.unique(tri)
    remap = -np.ones(len(allp), dtype=np.int64)
    remap[used] = np.arange(len(used))
    m = Mesh.from_arrays(allp[used], remap[tri])

    # every boundary edge must join consecutive samples of one curve
    nb = len(bnd)
    if not np.all(remap[:nb] >= 0):
        raise RuntimeError("a boundary sample was dropped")
    expected = set()
    start = 0
    for c in curves:
        n = len(c)
        for i in range(n):
            a, b = remap[start + i], remap[start + (i + 1) % n]
            expected.add((min(a, b), max(a, b)))
        start += n
    # edges used by one triangle only
    tri_edges = np.sort(np.vstack([m.triangles[:, [1, 2]], m.triangles[:, [2, 0]],
                                   m.triangles[:, [0, 1]]]), axis=1)
    uniq, counts = np.unique(tri_edges, axis=0, return_counts=True)
    got = {tuple(map(int, ed)) for ed in uniq[counts == 1]}
    if got != expected:
        raise RuntimeError("mesh boundary does not match the sampled curves")
    if m.boundary.sum() != nb:
        raise RuntimeError("unexpected boundary vertex count")
    return m


if __name__ == "__main__":
    mesh = build()
    out = Path(__file__).with_name("flower")
    write_triangle_mesh(mesh, out)
    print(f"{mesh.n_vertices} vertices, {mesh.n_triangles} triangles, longest edge {mesh.h_max:.4f}")
