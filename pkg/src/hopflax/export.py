"""Plain-text and legacy VTK writers for node fields and policies."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .mesh import Mesh


def write_xyz(m: Mesh, values, path) -> None:
    """One ``x y value`` line per vertex, full double precision."""
    vals = np.asarray(getattr(values, "values", values), dtype=np.float64)
    if len(vals) != m.n_vertices:
        raise ValueError("field length does not match mesh")
    np.savetxt(path, np.column_stack([m.vertices, vals]), fmt="%.17g")


def read_xyz(path) -> np.ndarray:
    """Inverse of :func:`write_xyz`; returns an (N, 3) array."""
    return np.atleast_2d(np.loadtxt(path, dtype=np.float64))


def write_policy(k, path) -> None:
    """``j k_j`` pairs, one vertex per line, 0-based; -1 marks a stop."""
    k = np.asarray(getattr(k, "k", k), dtype=np.int64)
    np.savetxt(path, np.column_stack([np.arange(len(k)), k]), fmt="%d")


def read_policy(path) -> np.ndarray:
    data = np.atleast_2d(np.loadtxt(path, dtype=np.int64))
    out = np.empty(len(data), dtype=np.int64)
    out[data[:, 0]] = data[:, 1]
    return out


def write_vtk(m: Mesh, fields: dict[str, np.ndarray], path, title: str = "hopflax field") -> None:
    """Legacy ASCII VTK unstructured grid with point scalars.

    Integer arrays (policies) are written as ``int``, everything else as
    ``double``.
    """
    lines = [
        "# vtk DataFile Version 3.0",
        title[:255],
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {m.n_vertices} double",
    ]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in m.vertices]
    t = m.triangles
    lines.append(f"CELLS {len(t)} {4 * len(t)}")
    lines += [f"3 {a} {b} {c}" for a, b, c in t]
    lines.append(f"CELL_TYPES {len(t)}")
    lines += ["5"] * len(t)
    if fields:
        lines.append(f"POINT_DATA {m.n_vertices}")
    for name, arr in fields.items():
        arr = np.asarray(getattr(arr, "values", arr))
        if len(arr) != m.n_vertices:
            raise ValueError(f"field {name!r} has the wrong length")
        if np.issubdtype(arr.dtype, np.integer):
            lines += [f"SCALARS {name} int 1", "LOOKUP_TABLE default"]
            lines += [str(int(a)) for a in arr]
        else:
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [f"{a:.17g}" for a in arr]
    Path(path).write_text("\n".join(lines) + "\n")
