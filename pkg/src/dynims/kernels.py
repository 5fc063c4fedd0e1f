"""Numeric kernels with a numba path and a pure-numpy path.

Every kernel exists in two flavours, ``*_nb`` (compiled with ``numba.njit``)
and ``*_np`` (vectorised numpy).  The un-suffixed public name is bound to one
of them at import time: numba when it imports cleanly, numpy when it does not
or when ``DYNIMS_PURE_NUMPY=1`` is set in the environment.  Both paths must
return identical results; ``tests/test_kernels.py`` checks this.
"""

from __future__ import annotations

import os

import numpy as np

try:  # pragma: no cover - exercised implicitly
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda f: f


USE_NUMBA = HAVE_NUMBA and os.environ.get("DYNIMS_PURE_NUMPY", "") not in ("1", "true", "yes")
BACKEND = "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# LFU victim selection
# ---------------------------------------------------------------------------

def lfu_order_np(counts, last, ids, sizes, need):
    """Positions to evict, in order, so that freed bytes >= ``need``.

    Ordering key is ``(counts, last, ids)`` ascending.  Returns the shortest
    prefix of that order whose sizes sum to at least ``need``.
    """
    if need <= 0 or len(counts) == 0:
        return np.empty(0, dtype=np.int64)
    order = np.lexsort((ids, last, counts))
    freed = np.cumsum(sizes[order])
    k = int(np.searchsorted(freed, need, side="left")) + 1
    return order[: min(k, len(order))].astype(np.int64)


@njit(cache=True)
def _pick_min(counts, last, ids, taken):
    best = -1
    for i in range(counts.shape[0]):
        if taken[i]:
            continue
        if best < 0 or counts[i] < counts[best] or (counts[i] == counts[best] and (
                last[i] < last[best] or (last[i] == last[best] and ids[i] < ids[best]))):
            best = i
    return best


@njit(cache=True)
def lfu_order_nb(counts, last, ids, sizes, need):
    n = counts.shape[0]
    if need <= 0 or n == 0:
        return np.empty(0, dtype=np.int64)
    # a few linear scans beat a sort for the common small eviction
    out = np.empty(n, dtype=np.int64)
    taken = np.zeros(n, dtype=np.bool_)
    freed = 0
    k = 0
    while freed < need and k < n and k < 8:
        best = _pick_min(counts, last, ids, taken)
        taken[best] = True
        out[k] = best
        k += 1
        freed += sizes[best]
    if freed >= need or k == n:
        return out[:k]
    # stable sorts from the least significant key up
    order = np.argsort(ids, kind="mergesort")
    order = order[np.argsort(last[order], kind="mergesort")]
    order = order[np.argsort(counts[order], kind="mergesort")]
    freed = 0
    k = 0
    while freed < need and k < n:
        freed += sizes[order[k]]
        k += 1
    return order[:k].astype(np.int64)


# ---------------------------------------------------------------------------
# Closed-loop control trajectories (storage tier assumed full: v = base + u)
# ---------------------------------------------------------------------------

def closed_loop_np(lams, r0, total_m, u_min, u_max, base_demand, u0, steps):
    """Iterate the proportional capacity law for a batch of gains.

    Row ``j`` of the result is the capacity trajectory (integer bytes, length
    ``steps + 1``) under gain ``lams[j]``.
    """
    lams = np.asarray(lams, dtype=np.float64)
    out = np.empty((lams.shape[0], steps + 1), dtype=np.int64)
    u = np.full(lams.shape[0], u0, dtype=np.int64)
    out[:, 0] = u
    m = float(total_m)
    for s in range(steps):
        v = (base_demand + u).astype(np.float64)
        r = v / m
        raw = u.astype(np.float64) - lams * v * (r - r0) / r0
        u = np.clip(np.trunc(raw).astype(np.int64), u_min, u_max)
        out[:, s + 1] = u
    return out


@njit(cache=True)
def closed_loop_nb(lams, r0, total_m, u_min, u_max, base_demand, u0, steps):
    nl = lams.shape[0]
    out = np.empty((nl, steps + 1), dtype=np.int64)
    m = float(total_m)
    for j in range(nl):
        lam = lams[j]
        u = u0
        out[j, 0] = u
        for s in range(steps):
            v = float(base_demand + u)
            r = v / m
            raw = float(u) - lam * v * (r - r0) / r0
            nu = np.int64(np.trunc(raw))
            if nu < u_min:
                nu = u_min
            elif nu > u_max:
                nu = u_max
            u = nu
            out[j, s + 1] = u
    return out


# ---------------------------------------------------------------------------
# Slowdown model
# ---------------------------------------------------------------------------

def slowdown_many_np(r, swap_pct, knee_r, full_r, f_full, f_half, f_one):
    r = np.asarray(r, dtype=np.float64)
    swap_pct = np.asarray(swap_pct, dtype=np.float64)
    ramp = np.clip((r - knee_r) / (full_r - knee_r), 0.0, 1.0)
    base = 1.0 + ramp * (f_full - 1.0)
    lo = swap_pct * (f_half - f_full) / 0.005
    hi = (f_half - f_full) + (swap_pct - 0.005) * (f_one - f_half) / 0.005
    pen = np.where(swap_pct <= 0.005, lo, hi)
    pen = np.where(swap_pct > 0.0, pen, 0.0)
    return base + pen


@njit(cache=True)
def slowdown_many_nb(r, swap_pct, knee_r, full_r, f_full, f_half, f_one):
    n = r.shape[0]
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        ramp = (r[i] - knee_r) / (full_r - knee_r)
        if ramp < 0.0:
            ramp = 0.0
        elif ramp > 1.0:
            ramp = 1.0
        f = 1.0 + ramp * (f_full - 1.0)
        s = swap_pct[i]
        if s > 0.0:
            if s <= 0.005:
                f += s * (f_half - f_full) / 0.005
            else:
                f += (f_half - f_full) + (s - 0.005) * (f_one - f_half) / 0.005
        out[i] = f
    return out


# ---------------------------------------------------------------------------
# Piecewise-linear timeline sampling
# ---------------------------------------------------------------------------

def sample_timeline_np(ts, vals, query):
    """Linear interpolation of breakpoints, held constant outside the range."""
    return np.interp(query, ts, vals)


@njit(cache=True)
def sample_timeline_nb(ts, vals, query):
    n = ts.shape[0]
    out = np.empty(query.shape[0], dtype=np.float64)
    j = 0
    for i in range(query.shape[0]):
        q = query[i]
        if q <= ts[0]:
            out[i] = vals[0]
            continue
        if q >= ts[n - 1]:
            out[i] = vals[n - 1]
            continue
        # queries are usually sorted; restart the walk when they are not
        if q < ts[j]:
            j = 0
        while ts[j + 1] < q:
            j += 1
        if q == ts[j + 1]:
            out[i] = vals[j + 1]
            continue
        slope = (vals[j + 1] - vals[j]) / (ts[j + 1] - ts[j])
        out[i] = slope * (q - ts[j]) + vals[j]
    return out


if USE_NUMBA:
    lfu_order = lfu_order_nb
    closed_loop = closed_loop_nb
    slowdown_many = slowdown_many_nb
    sample_timeline = sample_timeline_nb
else:
    lfu_order = lfu_order_np
    closed_loop = closed_loop_np
    slowdown_many = slowdown_many_np
    sample_timeline = sample_timeline_np
