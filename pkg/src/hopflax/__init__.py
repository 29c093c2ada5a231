"""Node-restricted semi-Lagrangian solvers for Hamilton-Jacobi equations on
unstructured triangular meshes."""

from __future__ import annotations

import os
import sys

# The worker pool is sized once, when numba loads. Allow a few more workers
# than cores so thread-count independence can be exercised on small
# machines; the active count defaults to the core count (or HOPFLAX_THREADS).
# Numba re-reads these variables later, so they are left alone when it was
# imported first.
if "numba" not in sys.modules:
    os.environ.setdefault("NUMBA_NUM_THREADS", str(max(os.cpu_count() or 1, 8)))
    os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp workqueue tbb")

import numba  # noqa: E402

from .hamiltonian import ConjugateHamiltonian, eval_conjugate  # noqa: E402
from .mesh import (  # noqa: E402
    Mesh, MeshError, SeedTable, build_seed_table, disc_mesh_for_dx, gen_disc_mesh,
    load_triangle_mesh, vertex_neighbors, write_triangle_mesh,
)
from .evolutive import EvolutiveConfig, NodeField, evolutive_step, run_evolutive  # noqa: E402
from .refine import build_stencil_table, fit_quadratic, quadratic_min, refine_minimum  # noqa: E402
from .stationary import (  # noqa: E402
    Policy, StationaryProblem, modified_policy_iteration, policy_evaluation_exact,
    policy_improvement, policy_iteration, value_iteration,
)
from .walker import multi_seed_minimize, walk_descent, warm_start_minimize  # noqa: E402

__version__ = "0.1.0"


def max_threads() -> int:
    return numba.config.NUMBA_NUM_THREADS


def set_threads(n: int | None) -> int:
    """Set the number of worker threads (None: the default) and return it.

    Requests above the pool size are capped.
    """
    if n is None:
        n = int(os.environ.get("HOPFLAX_THREADS", os.cpu_count() or 1))
    if n < 1:
        raise ValueError("thread count must be positive")
    n = min(n, max_threads())
    numba.set_num_threads(n)
    return n


set_threads(None)

__all__ = [
    "ConjugateHamiltonian", "EvolutiveConfig", "Mesh", "MeshError", "NodeField", "Policy",
    "SeedTable", "StationaryProblem", "build_seed_table", "build_stencil_table",
    "disc_mesh_for_dx", "eval_conjugate", "evolutive_step", "fit_quadratic", "gen_disc_mesh",
    "load_triangle_mesh", "max_threads", "modified_policy_iteration", "multi_seed_minimize",
    "policy_evaluation_exact", "policy_improvement", "policy_iteration", "quadratic_min",
    "refine_minimum", "run_evolutive", "set_threads", "value_iteration", "vertex_neighbors",
    "walk_descent", "warm_start_minimize", "write_triangle_mesh",
]
