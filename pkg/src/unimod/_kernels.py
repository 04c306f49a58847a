"""Compiled inner loops.  Callers validate arguments; these do not."""

import numpy as np
from numba import njit


@njit(cache=True)
def window_range_uniform(values, k):
    """Max over index windows ``[i-k, i]`` of ``max - min``, via monotone deques."""
    n = values.shape[0]
    maxq = np.empty(n, dtype=np.int64)
    minq = np.empty(n, dtype=np.int64)
    mh = 0
    mt = 0
    nh = 0
    nt = 0
    best = 0.0
    for i in range(n):
        x = values[i]
        while mt > mh and values[maxq[mt - 1]] <= x:
            mt -= 1
        maxq[mt] = i
        mt += 1
        while nt > nh and values[minq[nt - 1]] >= x:
            nt -= 1
        minq[nt] = i
        nt += 1
        while maxq[mh] < i - k:
            mh += 1
        while minq[nh] < i - k:
            nh += 1
        r = values[maxq[mh]] - values[minq[nh]]
        if r > best:
            best = r
    return best


@njit(cache=True)
def trailing_range(times, values, h):
    """For each i, ``max - min`` of values with ``t_i - h <= t <= t_i``."""
    n = times.shape[0]
    out = np.empty(n)
    maxq = np.empty(n, dtype=np.int64)
    minq = np.empty(n, dtype=np.int64)
    mh = 0
    mt = 0
    nh = 0
    nt = 0
    for i in range(n):
        x = values[i]
        while mt > mh and values[maxq[mt - 1]] <= x:
            mt -= 1
        maxq[mt] = i
        mt += 1
        while nt > nh and values[minq[nt - 1]] >= x:
            nt -= 1
        minq[nt] = i
        nt += 1
        ti = times[i]
        while ti - times[maxq[mh]] > h:
            mh += 1
        while ti - times[minq[nh]] > h:
            nh += 1
        out[i] = values[maxq[mh]] - values[minq[nh]]
    return out


@njit(cache=True)
def best_ratio_per_t(times, values, penalty):
    """For each right endpoint j, the best left partner and its ratio
    ``|v_j - v_i| / w(t_j, t_j - t_i)``.  Requires ``times > 0`` sorted."""
    n = times.shape[0]
    best = np.zeros(n)
    arg = np.full(n, -1, dtype=np.int64)
    for j in range(1, n):
        tj = times[j]
        lt = np.log(tj)
        base = 1.0 + lt + penalty * abs(lt)
        vj = values[j]
        bj = 0.0
        aj = -1
        for i in range(j):
            h = tj - times[i]
            if h <= 0.0:
                continue
            if h > tj:
                h = tj
            r = abs(vj - values[i]) / np.sqrt(h * (base - np.log(h)))
            if r > bj:
                bj = r
                aj = i
        best[j] = bj
        arg[j] = aj
    return best, arg
