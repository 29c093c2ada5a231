"""Brute-force reference implementations used by the tests.

Each one is deliberately naive (full scans, dense linear algebra). Apart
from the policy-iteration driver they share no code with the package
beyond reading mesh arrays.
"""

from __future__ import annotations

import numpy as np


def neighbors_by_scan(triangles: np.ndarray, v: int) -> set[int]:
    """Vertices sharing an edge with ``v``, by scanning every triangle."""
    out: set[int] = set()
    for t in triangles:
        if v in t:
            out.update(int(a) for a in t if a != v)
    return out


def nearest_by_scan(vertices: np.ndarray, p: np.ndarray) -> int:
    """Closest vertex to ``p``; the lowest index wins ties."""
    best, best_d = -1, np.inf
    for k, (x, y) in enumerate(vertices):
        d = (x - p[0]) ** 2 + (y - p[1]) ** 2
        if d < best_d:
            best, best_d = k, d
    return best


def hopf_lax_scan(vertices, base, dt, j, m=((1.0, 0.0), (0.0, 1.0))):
    """Exhaustive ``min_k base[k] + dt H*((x_j - x_k)/dt)`` for one home.

    Evaluated in the same floating-point order as the compiled kernel so
    values can be compared exactly. Returns ``(value, index)``.
    """
    x = np.asarray(vertices)
    q0 = (x[j, 0] - x[:, 0]) / dt
    q1 = (x[j, 1] - x[:, 1]) / dt
    f = base + dt * (0.5 * (m[0][0] * q0 * q0 + 2.0 * m[0][1] * q0 * q1 + m[1][1] * q1 * q1))
    k = int(np.argmin(f))
    return float(f[k]), k


def hopf_lax_step_scan(vertices, base, dt):
    vals = np.empty(len(vertices))
    idx = np.empty(len(vertices), dtype=np.int64)
    for j in range(len(vertices)):
        vals[j], idx[j] = hopf_lax_scan(vertices, base, dt, j)
    return vals, idx


def smooth_field_pairs(m, rng, n):
    """``n`` pairs ``V >= W`` built from bowls plus low-frequency ripples.

    Walk minimisation is exact on such data, so properties of the scheme
    can be checked on the real kernel after comparing it with the scan.
    """
    x = m.vertices
    for _ in range(n):
        z = rng.uniform(-1, 1, 2)
        a = rng.uniform(0.5, 2.0)
        ripple = 0.05 * np.sin(rng.uniform(0.5, 1.5) * x[:, 0] + rng.uniform(0, 6))
        v = 0.5 * a * np.sum((x - z) ** 2, axis=1) + ripple + rng.uniform(-1, 1)
        bump = rng.uniform(0, 0.3) * np.exp(-np.sum((x - rng.uniform(-1, 1, 2)) ** 2, axis=1))
        yield v, v - bump - rng.uniform(0, 0.1)


def dense_policy_value(k, costs, beta, stop_val=None):
    """Solve ``(I - beta P) v = c`` by dense Gaussian elimination."""
    n = len(k)
    a = np.eye(n)
    rhs = np.array(costs, dtype=np.float64)
    for j, kj in enumerate(k):
        if kj < 0:
            rhs[j] = stop_val[j]
        else:
            a[j, kj] -= beta
    return np.linalg.solve(a, rhs)


def random_policy(m, rng, stop_fraction=0.0):
    """Random successor list mixing short jumps and long ones; -1 stops."""
    n = m.n_vertices
    k = rng.integers(0, n, n)
    # mostly short jumps so that cycles and long trees both occur
    near = rng.random(n) < 0.7
    k[near] = np.minimum(np.arange(n)[near] + rng.integers(-3, 4, near.sum()).clip(-n, n), n - 1).clip(0)
    if stop_fraction:
        b = np.flatnonzero(m.boundary)
        k[b[rng.random(len(b)) < stop_fraction]] = -1
    return k


def oracle_policy_iteration(p, m):
    """Policy iteration whose improvement step is the exhaustive scan.

    Evaluation and the stage-cost objective come from the package; only
    the minimisation is replaced. Returns every evaluated field and the
    final policy.
    """
    from hopflax.stationary import Policy, policy_evaluation_exact

    d = p.discretize(m)
    pol = Policy.self_loop(m.n_vertices)
    values = []
    for _ in range(100):
        v = policy_evaluation_exact(p, m, pol).values
        values.append(v)
        _, k = hopf_lax_step_scan(m.vertices, d.base(v), p.dt)
        # keep the current choice unless strictly improved
        j = np.arange(m.n_vertices)
        keep = d.objective(v, j, pol.k) <= d.objective(v, j, k)
        k[keep] = pol.k[keep]
        if np.array_equal(k, pol.k):
            return values, pol
        pol = Policy(k)
    raise AssertionError("oracle policy iteration did not converge")


def euler_characteristic(n_vertices: int, triangles: np.ndarray) -> int:
    e = np.sort(np.vstack([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]), axis=1)
    n_edges = len(np.unique(e, axis=0))
    return n_vertices - n_edges + len(triangles)
