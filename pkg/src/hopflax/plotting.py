"""Figures written straight to files (Agg backend, no display needed)."""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import matplotlib.tri as mtri  # noqa: E402
import numpy as np  # noqa: E402

from .analysis import ConvergenceRow  # noqa: E402
from .mesh import Mesh  # noqa: E402


def plot_error_vs_time(series: dict[str, Sequence[ConvergenceRow]], path, norm: str = "e1") -> None:
    """Log-log error against wall time, one line per series."""
    fig, ax = plt.subplots(figsize=(5, 4))
    for label, rows in series.items():
        t = [max(r.seconds, 1e-6) for r in rows]
        e = [getattr(r, norm) for r in rows]
        ax.loglog(t, e, "o-", label=label)
    ax.set_xlabel("wall time [s]")
    ax.set_ylabel("relative L1 error" if norm == "e1" else "relative max error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_convergence(rows: Sequence[ConvergenceRow], path, title: str = "") -> None:
    """Both error norms against ``dx`` with a first-order reference slope."""
    dx = np.array([r.dx for r in rows])
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(dx, [r.e1 for r in rows], "o-", label="L1")
    ax.loglog(dx, [r.einf for r in rows], "s-", label="max")
    if len(rows):
        ref = rows[0].e1 * dx / dx[0]
        ax.loglog(dx, ref, "k--", lw=0.8, label="slope 1")
    ax.set_xlabel("dx")
    ax.set_ylabel("relative error")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_field(m: Mesh, values, path, title: str = "") -> None:
    """Filled contour plot of a node field on the triangulation."""
    vals = np.asarray(getattr(values, "values", values), dtype=np.float64)
    tri = mtri.Triangulation(m.vertices[:, 0], m.vertices[:, 1], m.triangles)
    fig, ax = plt.subplots(figsize=(5, 4.5))
    cs = ax.tricontourf(tri, vals, levels=30, cmap="viridis")
    fig.colorbar(cs, ax=ax)
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
