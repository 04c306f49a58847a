"""Independent brute-force references used across the tests."""

import numpy as np


def brute_modulus(values, k):
    """Max ``|v_j - v_i|`` over index pairs with ``0 < j - i <= k``."""
    v = np.asarray(values, dtype=float)
    n = v.size
    i, j = np.triu_indices(n, 1)
    keep = (j - i) <= k
    if not keep.any():
        return 0.0
    return float(np.abs(v[j[keep]] - v[i[keep]]).max())


def brute_ratio(times, values, eps, penalty=True):
    """Max over all pairs of ``|v_t - v_s| / w(t, t - s)`` by plain broadcasting."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    i, j = np.triu_indices(t.size, 1)
    ti, tj = t[i], t[j]
    h = np.minimum(tj - ti, tj)
    lt = np.log(tj)
    den = np.sqrt(h * (1.0 + lt - np.log(h) + (eps if penalty else 0.0) * np.abs(lt)))
    r = np.abs(v[j] - v[i]) / den
    k = int(np.argmax(r))
    return float(r[k]), float(ti[k]), float(tj[k])


def brute_modulus_all(values):
    """``brute_modulus(values, k)`` for every ``k = 1..n-1`` from the full pair matrix."""
    v = np.asarray(values, dtype=float)
    d = np.abs(v[None, :] - v[:, None])
    lag = np.subtract.outer(np.arange(v.size), np.arange(v.size))
    per_lag = np.zeros(v.size)
    np.maximum.at(per_lag, lag[lag > 0], d[lag > 0])
    return np.maximum.accumulate(per_lag[1:])
