"""Compiled per-vertex minimisation sweeps for quadratic conjugates.

The objective minimised for home vertex ``j`` is

    F_j(k) = base[k] + dt * H*((x_j - x_k) / dt),   H*(q) = q^T M q / 2

and every per-vertex minimisation is independent, so the sweep is a
parallel map over chunks of home vertices with per-chunk scratch buffers.
"""

import numba
import numpy as np

from .mesh import rotate_neighbors

REFINE_NONE = 0
REFINE_ACCEPTED = 1
REFINE_REJECTED = 2


@numba.njit(cache=True, inline="always")
def _objective(j, k, xy, base, dt, m00, m01, m11):
    q0 = (xy[j, 0] - xy[k, 0]) / dt
    q1 = (xy[j, 1] - xy[k, 1]) / dt
    return base[k] + dt * (0.5 * (m00 * q0 * q0 + 2.0 * m01 * q0 * q1 + m11 * q1 * q1))


@numba.njit(cache=True, inline="always")
def _memo_eval(j, k, xy, base, dt, m00, m01, m11, memo_val, memo_stamp, hgen):
    if memo_stamp[k] == hgen:
        return memo_val[k]
    f = _objective(j, k, xy, base, dt, m00, m01, m11)
    memo_val[k] = f
    memo_stamp[k] = hgen
    return f


@numba.njit(cache=True)
def _walk(j, seed, xy, tris, tn, inc, base, dt, m00, m01, m11,
          memo_val, memo_stamp, hgen, visit, wgen, nbuf):
    n = xy.shape[0]
    cur = seed
    fcur = _memo_eval(j, cur, xy, base, dt, m00, m01, m11, memo_val, memo_stamp, hgen)
    visit[cur] = wgen
    steps = 1
    moves = 0
    while True:
        cnt = rotate_neighbors(cur, tris, tn, inc, nbuf)
        if cnt < 0:
            raise RuntimeError("corrupted connectivity during walk")
        best = cur
        fbest = fcur
        for i in range(cnt):
            k = nbuf[i]
            if visit[k] == wgen:
                continue
            visit[k] = wgen
            steps += 1
            fk = _memo_eval(j, k, xy, base, dt, m00, m01, m11, memo_val, memo_stamp, hgen)
            if fk < fbest or (fk == fbest and best != cur and k < best):
                best = k
                fbest = fk
        if best == cur:
            return cur, fcur, steps
        cur = best
        fcur = fbest
        moves += 1
        if moves > n:
            raise RuntimeError("walk step budget exceeded")


@numba.njit(cache=True)
def _refine(j, k, xy, base, dt, m00, m01, m11, memo_val, memo_stamp, hgen,
            st_ptr, st_idx, pinv, reach):
    """Least-squares quadratic minimum on the stencil of ``k``.

    Returns ``(value, accepted)``; ``pinv`` rows for vertex ``k`` are stored
    as 6 consecutive blocks of length M starting at ``6 * st_ptr[k]``. Fits
    whose minimiser lies farther from ``x_k`` than the stencil (squared
    scaled distance ``reach[k]``) are rejected.
    """
    lo = st_ptr[k]
    hi = st_ptr[k + 1]
    msz = hi - lo
    a = np.zeros(6)
    for l in range(msz):
        f = _memo_eval(j, st_idx[lo + l], xy, base, dt, m00, m01, m11,
                       memo_val, memo_stamp, hgen)
        for r in range(6):
            a[r] += pinv[6 * lo + r * msz + l] * f
    a11 = a[0]
    a12 = a[1]
    a22 = a[2]
    b1 = a[3]
    b2 = a[4]
    c = a[5]
    det = a11 * a22 - a12 * a12
    if not (a11 > 0.0 and det > 0.0):
        return 0.0, False
    xi1 = (a22 * b1 - a12 * b2) / det
    xi2 = (a11 * b2 - a12 * b1) / det
    if not xi1 * xi1 + xi2 * xi2 <= reach[k]:
        return 0.0, False
    q = (a22 * b1 * b1 - 2.0 * a12 * b1 * b2 + a11 * b2 * b2) / (2.0 * (a12 * a12 - a11 * a22)) + c
    return q, True


@numba.njit(cache=True, parallel=True)
def sweep(xy, tris, tn, inc, boundary, seeds, base, dt, m00, m01, m11,
          homes, refine, clamp, st_ptr, st_idx, st_ok, pinv, reach, nbuf_len, nchunks,
          out_val, out_raw, out_arg, out_steps, out_flag):
    """Minimise F_j over the vertex graph for every ``j`` in ``homes``.

    ``seeds[s, j]`` are the walk starting points for home ``j`` (duplicates
    are walked once). Results are written at position ``i`` for
    ``homes[i]``; ties between walks go to the lowest vertex index.
    """
    n = xy.shape[0]
    nh = homes.shape[0]
    ns = seeds.shape[0]
    size = (nh + nchunks - 1) // nchunks
    for c in numba.prange(nchunks):
        memo_val = np.empty(n)
        memo_stamp = np.zeros(n, dtype=np.int64)
        visit = np.zeros(n, dtype=np.int64)
        nbuf = np.empty(nbuf_len, dtype=np.int64)
        hgen = 0
        wgen = 0
        for i in range(c * size, min(nh, (c + 1) * size)):
            j = homes[i]
            hgen += 1
            best_k = -1
            best_f = np.inf
            steps = 0
            for s in range(ns):
                sd = seeds[s, j]
                dup = False
                for r in range(s):
                    if seeds[r, j] == sd:
                        dup = True
                        break
                if dup:
                    continue
                wgen += 1
                k, f, st = _walk(j, sd, xy, tris, tn, inc, base, dt, m00, m01, m11,
                                 memo_val, memo_stamp, hgen, visit, wgen, nbuf)
                steps += st
                if f < best_f or (f == best_f and k < best_k):
                    best_k = k
                    best_f = f
            out_arg[i] = best_k
            out_raw[i] = best_f
            out_steps[i] = steps
            val = best_f
            flag = REFINE_NONE
            if refine and not boundary[best_k]:
                if st_ok[best_k]:
                    q, ok = _refine(j, best_k, xy, base, dt, m00, m01, m11,
                                    memo_val, memo_stamp, hgen, st_ptr, st_idx, pinv, reach)
                    if ok:
                        flag = REFINE_ACCEPTED
                        val = min(q, best_f) if clamp else q
                    else:
                        flag = REFINE_REJECTED
                else:
                    flag = REFINE_REJECTED
            out_val[i] = val
            out_flag[i] = flag
