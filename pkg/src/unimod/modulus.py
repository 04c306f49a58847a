"""Pathwise moduli of continuity and brackets for the sup-ratio statistic.

For a path ``B`` and a window ``[t_min, t_max]`` the statistic bracketed here
is ``max |B_t - B_s| / w(t, t - s)`` over materialised times ``s < t`` of the
window.  The lower end is an exact maximum over explicit pairs; the upper
end is a band relaxation that bounds every such pair, so
``lower <= upper`` always.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DomainError, ResourceError
from .modcore import WSpec, scaling_factor, w, w_array
from .brownian import ScaledPathView

__all__ = [
    "ModulusTable",
    "MBracket",
    "TailReport",
    "ScaledComparison",
    "modulus_of_continuity",
    "modulus_table",
    "trailing_oscillation",
    "dyadic_grid",
    "max_ratio",
    "estimate_M",
    "upper_bracket",
    "modulus_bound_ratio",
    "exponential_moment_diagnostics",
    "scaled_M_comparison",
    "levy_ratio",
]


@dataclass
class ModulusTable:
    T: float
    h_grid: list
    omega: list


@dataclass
class MBracket:
    lower: float
    upper: float
    t_range: tuple
    grid_levels: int
    spec: WSpec
    argmax: tuple = (math.nan, math.nan)
    coarse_lower: float = math.nan
    n_points: int = 0

    def __post_init__(self):
        if self.lower > self.upper:
            raise AssertionError(f"bracket inverted: {self.lower} > {self.upper}")


def _window_steps(n: int, T: float, h: float) -> int:
    dt = T / (n - 1)
    # Tolerate h landing a rounding error short of a whole number of steps.
    return int(math.floor(h / dt * (1.0 + 1e-12) + 1e-12))


def modulus_of_continuity(samples, T: float, h: float) -> float:
    """``sup |f(t) - f(s)|`` over grid pairs with ``|t - s| <= h``.

    ``samples`` are values on the uniform grid ``linspace(0, T, n)``.
    """
    samples = np.ascontiguousarray(samples, dtype=float)
    if samples.ndim != 1 or samples.size < 2:
        raise DomainError("need at least two samples on a uniform grid")
    if not (0.0 < h <= T):
        raise DomainError(f"window width must satisfy 0 < h <= T, got h={h!r}, T={T!r}")
    k = _window_steps(samples.size, T, h)
    if k == 0:
        return 0.0
    return float(_kernels.window_range_uniform(samples, k))


def modulus_table(samples, T: float, h_grid) -> ModulusTable:
    omega = [modulus_of_continuity(samples, T, h) for h in h_grid]
    return ModulusTable(T=T, h_grid=list(h_grid), omega=omega)


def trailing_oscillation(times, values, h: float) -> np.ndarray:
    """Per point, the range of values over the trailing window ``[t - h, t]``."""
    times = np.ascontiguousarray(times, dtype=float)
    values = np.ascontiguousarray(values, dtype=float)
    return _kernels.trailing_range(times, values, float(h))


def dyadic_grid(t_min: float, t_max: float, levels: int) -> np.ndarray:
    """``2**k * (1 + i / 2**levels)`` over every octave meeting the window.

    Nested in ``levels`` and in the window, so refining either only adds points.
    """
    if not (0.0 < t_min < t_max):
        raise DomainError("need 0 < t_min < t_max")
    if levels < 1:
        raise DomainError("levels must be >= 1")
    k_lo = math.floor(math.log2(t_min))
    k_hi = math.floor(math.log2(t_max))
    frac = 1.0 + np.arange(2**levels) / 2**levels
    pts = np.concatenate([np.ldexp(frac, k) for k in range(k_lo, k_hi + 1)])
    pts = pts[(pts >= t_min) & (pts <= t_max)]
    return np.unique(np.concatenate([[t_min, t_max], pts]))


def max_ratio(times, values, spec: WSpec):
    """Exact ``max |v_t - v_s| / w(t, t - s)`` over all pairs; returns ``(ratio, s, t)``."""
    times = np.ascontiguousarray(times, dtype=float)
    values = np.ascontiguousarray(values, dtype=float)
    if times.size < 2:
        return 0.0, math.nan, math.nan
    best, arg = _kernels.best_ratio_per_t(times, values, spec.penalty)
    j = int(np.argmax(best))
    if best[j] == 0.0:
        return 0.0, math.nan, math.nan
    return float(best[j]), float(times[arg[j]]), float(times[j])


def _top_pairs(times, values, spec, count):
    best, arg = _kernels.best_ratio_per_t(times, values, spec.penalty)
    # Ties resolved toward the lowest t: stable sort on -ratio keeps index order.
    order = np.argsort(-best, kind="stable")[:count]
    return [(float(times[arg[j]]), float(times[j])) for j in order if best[j] > 0.0]


def _refine_pair(path, spec, pts: list, s: float, t: float, rounds: int, lo: float, hi: float):
    """Zoom on a pair by bisecting the gaps beside each endpoint ``rounds`` times."""
    import bisect

    def neighbours(x):
        i = bisect.bisect_left(pts, x)
        left = pts[i - 1] if i > 0 else None
        right = pts[i + 1] if i + 1 < len(pts) else None
        return left, right

    for _ in range(rounds):
        local = {s, t}
        for x in (s, t):
            left, right = neighbours(x)
            for y in (left, right):
                if y is None:
                    continue
                m = 0.5 * (x + y)
                # gaps this small would snap onto an endpoint instead of refining
                if abs(x - y) <= 1e-10:
                    continue
                if lo <= m <= hi and m not in local:
                    path.evaluate(m)
                    bisect.insort(pts, m)
                    local.add(m)
            local.update(v for v in (left, right) if v is not None)
        cand = np.array(sorted(local))
        vals = path.evaluate_many(cand)
        r, s_new, t_new = max_ratio(cand, vals, spec)
        if not r > 0.0:
            break
        s, t = s_new, t_new


def upper_bracket(times, values, spec: WSpec, t_min: float, t_max: float) -> float:
    """Band relaxation bounding the ratio of every pair of the given points.

    For a dyadic band ``h in (h_lo, 2 h_lo]`` and a dyadic octave of ``t`` with
    lower edge ``t_a``, numerators are bounded by the trailing oscillation at
    width ``2 h_lo`` and denominators from below by ``w(t_a, h_lo)``, which is
    legitimate because ``w`` is nondecreasing in both arguments.
    """
    times = np.ascontiguousarray(times, dtype=float)
    values = np.ascontiguousarray(values, dtype=float)
    if times.size < 2:
        return 0.0
    gaps = np.diff(times)
    span = times[-1] - times[0]
    j_lo = math.floor(math.log2(gaps.min())) - 1
    j_hi = math.ceil(math.log2(span))
    k_lo = math.floor(math.log2(times[0]))
    k_hi = math.floor(math.log2(times[-1]))
    edges = [max(math.ldexp(1.0, k), t_min) for k in range(k_lo, k_hi + 1)]
    starts = np.searchsorted(times, edges, side="left")
    stops = np.append(starts[1:], times.size)
    best = 0.0
    for j in range(j_lo, j_hi + 1):
        h_lo = math.ldexp(1.0, j)
        osc = _kernels.trailing_range(times, values, 2.0 * h_lo)
        for edge, a, b in zip(edges, starts, stops):
            if b <= a:
                continue
            num = osc[a:b].max()
            if num > 0.0:
                best = max(best, num / w(spec, edge, h_lo))
    return float(best)


def estimate_M(path, spec: WSpec, t_min: float, t_max: float, levels: int,
               max_points: int = 20_000, refine: bool = True) -> MBracket:
    """Bracket the sup ratio of ``path`` over ``[t_min, t_max]``.

    The coarse pass evaluates the dyadic grid; the ``ceil(1%)`` best
    right endpoints then get ``levels`` rounds of bridge bisection around their
    best pair.  Both bracket ends are finally computed over every materialised
    point of the window, so repeated calls on one store are monotone.
    """
    grid = dyadic_grid(t_min, t_max, levels)
    if grid.size > max_points:
        raise ResourceError(f"grid of {grid.size} points exceeds max_points={max_points}")
    path.evaluate_many(grid)
    times, values = path.materialized(t_min, t_max)
    coarse, _, _ = max_ratio(grid, path.evaluate_many(grid), spec)
    if refine and coarse > 0.0:
        count = max(1, math.ceil(0.01 * times.size))
        pts = times.tolist()
        for s, t in _top_pairs(times, values, spec, count):
            _refine_pair(path, spec, pts, s, t, levels, t_min, t_max)
        times, values = path.materialized(t_min, t_max)
    if times.size > max_points:
        raise ResourceError(f"{times.size} materialised points exceed max_points={max_points}")
    lower, s, t = max_ratio(times, values, spec)
    upper = upper_bracket(times, values, spec, t_min, t_max)
    return MBracket(lower=lower, upper=max(upper, lower), t_range=(t_min, t_max),
                    grid_levels=levels, spec=spec, argmax=(s, t),
                    coarse_lower=coarse, n_points=int(times.size))


def modulus_bound_ratio(times, values, spec: WSpec, t_values, h_values) -> float:
    """``max omega(t, h) / w(t, h)`` with ``omega`` over points in ``[times[0], t]``.

    Any bracket lower end computed over the same points dominates this.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    worst = 0.0
    for h in h_values:
        osc = trailing_oscillation(times, values, h)
        run = np.maximum.accumulate(osc)
        idx = np.searchsorted(times, t_values, side="right") - 1
        for t, i in zip(t_values, idx):
            if i >= 0 and run[i] > 0.0:
                worst = max(worst, run[i] / w(spec, t, h))
    return worst


@dataclass
class TailReport:
    lambdas: list
    exp_means: list
    stable: list
    tail_slope: float
    tail_slope_ci: tuple
    tail_slope_plain: float
    n: int
    extras: dict = field(default_factory=dict)


def exponential_moment_diagnostics(samples_of_M, lambdas, min_samples: int = 256) -> TailReport:
    """Empirical ``E[exp(lambda M^2)]`` and a Gaussian-tail fit of ``P(M > m)``.

    The tail fit regresses ``log P(M > m)`` on ``[1, m^2, ln m]`` over the upper
    quartile; the ``ln m`` column absorbs the Mills-ratio prefactor of a
    Gaussian tail, so a normal sample yields a slope near ``-1/2``.  The plain
    two-column fit is reported alongside.  The interval is the OLS 95% band,
    optimistic because neighbouring order statistics are correlated.
    """
    m = np.sort(np.asarray(samples_of_M, dtype=float))
    n = m.size
    if n < min_samples:
        raise DomainError(f"need at least {min_samples} samples, got {n}")
    means, stable = [], []
    for lam in lambdas:
        terms = np.exp(lam * m * m)
        total = terms.sum()
        means.append(float(total / n))
        stable.append(bool(np.isfinite(total) and terms.max() < 0.5 * total))

    i0 = int(0.75 * n)
    mm = m[i0:]
    surv = (n - np.arange(i0, n) - 0.5) / n
    y = np.log(surv)
    slope = ci_lo = ci_hi = plain = math.nan
    if mm[0] > 0.0 and mm[-1] > mm[0]:
        design = np.column_stack([np.ones_like(mm), mm**2, np.log(mm)])
        coef, res, rank, _ = np.linalg.lstsq(design, y, rcond=None)
        if rank == 3 and mm.size > 3:
            resid = y - design @ coef
            sigma2 = resid @ resid / (mm.size - 3)
            cov = sigma2 * np.linalg.inv(design.T @ design)
            half = 1.96 * math.sqrt(cov[1, 1])
            slope, ci_lo, ci_hi = float(coef[1]), float(coef[1] - half), float(coef[1] + half)
        plain = float(np.polyfit(mm**2, y, 1)[0])
    return TailReport(lambdas=list(lambdas), exp_means=means, stable=stable,
                      tail_slope=slope, tail_slope_ci=(ci_lo, ci_hi),
                      tail_slope_plain=plain, n=n)


@dataclass
class ScaledComparison:
    a: float
    factor: float
    scaled: MBracket
    base: MBracket

    @property
    def bound(self) -> float:
        return self.factor * self.base.upper

    @property
    def ok(self) -> bool:
        return self.scaled.lower <= self.bound


def scaled_M_comparison(store, spec: WSpec, a: float, window, levels: int, **kwargs) -> ScaledComparison:
    """Compare the bracket of ``a**-0.5 B(a t)`` with that of ``B`` on the mapped window.

    The scaled bracket is computed first; the base bracket then ranges over
    every time it touched without refining further, so at ``a = 1`` the two
    brackets coincide exactly.
    """
    t_min, t_max = window
    scaled = estimate_M(ScaledPathView(store, a), spec, t_min, t_max, levels, **kwargs)
    kwargs["refine"] = False
    base = estimate_M(store, spec, a * t_min, a * t_max, levels, **kwargs)
    return ScaledComparison(a=a, factor=scaling_factor(spec, a), scaled=scaled, base=base)


def levy_ratio(samples, h: float) -> float:
    """``omega(1, h) / sqrt(2 h ln(1/h))`` for values on a uniform grid of ``[0, 1]``."""
    return modulus_of_continuity(samples, 1.0, h) / math.sqrt(2.0 * h * math.log(1.0 / h))
