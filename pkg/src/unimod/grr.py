"""Garsia-Rodemich-Rumsey machinery evaluated path by path.

With ``Psi(x) = exp(x^2/2) - 1`` and ``mu(x) = sqrt(c x)`` the central
object is the double integral

    B_T = int_0^T int_0^T Psi(|B_t - B_s| / mu(|t - s|)) ds dt

from which the continuity estimate

    |f(t) - f(s)| <= 8 int_0^{|t-s|} Psi^{-1}(4 B_T / u^2) dmu(u)

follows for every pair in ``[0, T]``.  ``xi_T = f_eps(T) B_T`` and their sup
over integer and inverse-integer horizons control the sup-ratio statistic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import integrate

from .errors import DomainError
from .modcore import WSpec, f_eps

__all__ = [
    "GrrCertificate",
    "XiEstimate",
    "GaussianIdentityCheck",
    "MomentBoundRow",
    "ChainCheck",
    "admitted_horizon",
    "midpoint_nodes",
    "double_integral",
    "compute_xi_T",
    "compute_xi",
    "grr_rhs",
    "grr_rhs_many",
    "certify_grr",
    "check_gaussian_identity",
    "moment_bounds",
    "check_moment_bound",
    "constant_chain_rhs",
    "check_constant_chain",
    "i2_closed_form",
    "i3_closed_form",
    "i3_bound",
    "i3_bound_half",
]


@dataclass
class GrrCertificate:
    T: float
    B_T: float
    pairs_checked: int
    max_violation: float
    quadrature_n: int
    worst_pair: tuple = (math.nan, math.nan)
    max_rel_violation: float = -math.inf
    tolerance: float = 1e-6

    @property
    def passed(self) -> bool:
        return self.max_rel_violation <= self.tolerance


@dataclass
class XiEstimate:
    T: float
    xi_T: float
    xi_sup_truncated: float
    T_max: int
    terms: dict = field(default_factory=dict)

    def covers(self, t_min: float, t_max: float) -> bool:
        """Whether the evaluated horizons cover every time of ``[t_min, t_max]``."""
        need_hi = max(1, math.ceil(t_max - 1e-12))
        need_lo = max(1, math.floor(1.0 / t_min + 1e-12))
        have_hi = all(float(k) in self.terms for k in range(1, need_hi + 1))
        have_lo = all(1.0 / k in self.terms for k in range(2, need_lo + 1))
        return have_hi and have_lo


def admitted_horizon(T: float) -> float:
    """Snap ``T`` to an integer or inverse integer, rejecting anything else."""
    if not T > 0.0:
        raise DomainError(f"horizon must be positive, got {T!r}")
    if T >= 1.0:
        k = round(T)
        if abs(T - k) <= 1e-9 * k:
            return float(k)
    else:
        k = round(1.0 / T)
        if abs(1.0 / T - k) <= 1e-9 * k:
            return 1.0 / k
    raise DomainError(f"horizon must be an integer or an inverse integer, got {T!r}")


def midpoint_nodes(T: float, n: int) -> np.ndarray:
    return (np.arange(n) + 0.5) * (T / n)


@njit(cache=True)
def _psi_sum(values, cell, c):
    n = values.shape[0]
    total = 0.0
    for lag in range(1, n):
        scale = 1.0 / (2.0 * c * lag * cell)
        acc = 0.0
        for i in range(n - lag):
            d = values[i + lag] - values[i]
            acc += np.expm1(d * d * scale)
        total += acc
    return 2.0 * total * cell * cell


def double_integral(path, spec: WSpec, T: float, n: int) -> float:
    """Midpoint rule for ``B_T`` on the ``n x n`` grid, using s<->t symmetry."""
    if n < 2:
        raise DomainError("quadrature needs n >= 2")
    values = np.ascontiguousarray(path.evaluate_many(midpoint_nodes(T, n)))
    return float(_psi_sum(values, T / n, spec.c))


def compute_xi_T(path, spec: WSpec, T: float, n: int = 256) -> XiEstimate:
    if n < 64:
        raise DomainError("xi_T quadrature needs n >= 64")
    T = admitted_horizon(T)
    value = f_eps(spec, T) * double_integral(path, spec, T, n)
    level = int(round(T if T >= 1.0 else 1.0 / T))
    return XiEstimate(T=T, xi_T=value, xi_sup_truncated=value, T_max=level, terms={T: value})


def compute_xi(path, spec: WSpec, T_max: int = 16, n: int = 256) -> XiEstimate:
    """``max{xi_T, xi_{1/T} : T <= T_max}`` with every term kept in ``terms``."""
    if T_max < 1:
        raise DomainError("T_max must be >= 1")
    horizons = [float(k) for k in range(1, T_max + 1)] + [1.0 / k for k in range(2, T_max + 1)]
    terms = {T: compute_xi_T(path, spec, T, n).xi_T for T in horizons}
    T_best = max(terms, key=lambda k: (terms[k], -k))
    return XiEstimate(T=T_best, xi_T=terms[T_best], xi_sup_truncated=terms[T_best],
                      T_max=T_max, terms=terms)


def _rhs_integrand(v: float, log4b: float) -> float:
    # sqrt(2 ln(1 + 4B/v^4)) with the log kept finite for tiny v.
    x = log4b - 4.0 * math.log(v)
    lg = x + math.log1p(math.exp(-x)) if x > 0.0 else math.log1p(math.exp(x))
    return math.sqrt(2.0 * lg)


def _rhs_segment(log4b: float, a: float, b: float, epsrel: float) -> float:
    val, _ = integrate.quad(_rhs_integrand, a, b, args=(log4b,),
                            epsabs=0.0, epsrel=epsrel, limit=200)
    return val


def grr_rhs(spec: WSpec, B_T: float, h: float, epsrel: float = 1e-10) -> float:
    """``8 int_0^h Psi^{-1}(4 B_T / u^2) dmu(u)``.

    With ``u = v^2`` this is ``8 sqrt(c) int_0^{sqrt h} sqrt(2 ln(1 + 4 B_T / v^4)) dv``,
    whose only endpoint singularity is an integrable ``sqrt(log)``.
    """
    if B_T < 0.0 or not h > 0.0:
        raise DomainError("grr_rhs needs B_T >= 0 and h > 0")
    if B_T == 0.0:
        return 0.0
    return 8.0 * math.sqrt(spec.c) * _rhs_segment(math.log(4.0 * B_T), 0.0, math.sqrt(h), epsrel)


def grr_rhs_many(spec: WSpec, B_T: float, hs, epsrel: float = 1e-10) -> np.ndarray:
    """``grr_rhs`` at many widths by accumulating integrals between sorted nodes."""
    hs = np.asarray(hs, dtype=float)
    if B_T < 0.0 or np.any(hs <= 0.0):
        raise DomainError("grr_rhs needs B_T >= 0 and h > 0")
    if B_T == 0.0:
        return np.zeros_like(hs)
    order = np.argsort(hs)
    log4b = math.log(4.0 * B_T)
    out = np.empty_like(hs)
    acc, prev = 0.0, 0.0
    for idx in order:
        v = math.sqrt(hs[idx])
        if v > prev:
            acc += _rhs_segment(log4b, prev, v, epsrel)
            prev = v
        out[idx] = acc
    return 8.0 * math.sqrt(spec.c) * out


def certify_grr(path, spec: WSpec, T: float = 1.0, n: int = 256, n_pairs: int = 1000,
                pair_seed: int = 0, tolerance: float = 1e-6) -> GrrCertificate:
    """Check the continuity estimate at random pairs of quadrature nodes."""
    nodes = midpoint_nodes(T, n)
    values = path.evaluate_many(nodes)
    B_T = double_integral(path, spec, T, n)
    rng = np.random.default_rng(pair_seed)
    i = rng.integers(0, n, size=n_pairs)
    j = rng.integers(0, n, size=n_pairs)
    same = i == j
    j[same] = (j[same] + 1 + rng.integers(0, n - 1, size=same.sum())) % n
    lo, hi = np.minimum(i, j), np.maximum(i, j)
    lag = hi - lo
    lags = np.unique(lag)
    rhs_by_lag = dict(zip(lags.tolist(), grr_rhs_many(spec, B_T, lags * (T / n)).tolist()))
    rhs = np.array([rhs_by_lag[k] for k in lag.tolist()])
    lhs = np.abs(values[hi] - values[lo])
    viol = lhs - rhs
    k = int(np.argmax(viol))
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(rhs > 0.0, viol / rhs, np.where(lhs > 0.0, np.inf, -np.inf))
    return GrrCertificate(T=T, B_T=B_T, pairs_checked=int(n_pairs), max_violation=float(viol[k]),
                          quadrature_n=n, worst_pair=(float(nodes[lo[k]]), float(nodes[hi[k]])),
                          max_rel_violation=float(rel.max()), tolerance=tolerance)


@dataclass
class GaussianIdentityCheck:
    q: float
    c: float
    estimate: float
    se: float
    target: float
    z_score: float
    method: str
    plain_estimate: float
    plain_se: float

    @property
    def plain_z(self) -> float:
        return (self.plain_estimate - self.target) / self.plain_se


def check_gaussian_identity(q: float, c: float, n_samples: int = 10**6, seed: int = 0,
                            method: str = "auto") -> GaussianIdentityCheck:
    """Monte Carlo check of ``E[exp(q Z^2 / (2c))] = sqrt(c / (c - q))``.

    The plain estimator has infinite variance once ``q/c >= 1/2``, so its
    standard error is no yardstick there.  ``method="auto"`` then switches to
    importance sampling from ``N(0, s^2)`` with ``s^2 (1 - q/c) = 3/4``, which
    keeps the weighted integrand square integrable for every ``0 < q < c``.
    The plain estimate is always reported as well.
    """
    if not (0.0 < q < c):
        raise DomainError("need 0 < q < c (the moment is infinite for q >= c)")
    if method == "auto":
        method = "plain" if q / c < 0.5 else "importance"
    if method not in ("importance", "plain"):
        raise DomainError(f"unknown method {method!r}")
    target = math.sqrt(c / (c - q))
    rng = np.random.default_rng([seed, int(round(q * 1e6)), int(round(c * 1e6))])
    x = rng.standard_normal(n_samples)
    plain = np.exp(q * x * x / (2.0 * c))
    p_mean, p_se = float(plain.mean()), float(plain.std(ddof=1) / math.sqrt(n_samples))
    if method == "plain":
        est, se = p_mean, p_se
    else:
        s = math.sqrt(0.75 / (1.0 - q / c))
        z = s * rng.standard_normal(n_samples)
        # integrand * phi(z) / phi_s(z), left unsimplified on purpose
        weight = s * np.exp(-0.5 * z * z + 0.5 * (z / s) ** 2)
        y = np.exp(q * z * z / (2.0 * c)) * weight
        est, se = float(y.mean()), float(y.std(ddof=1) / math.sqrt(n_samples))
    return GaussianIdentityCheck(q=q, c=c, estimate=est, se=se, target=target,
                                 z_score=(est - target) / se, method=method,
                                 plain_estimate=p_mean, plain_se=p_se)


def moment_bounds(spec: WSpec, q: float, T: int, inverse: bool = False):
    """Both candidate bounds on ``E[xi_T^q]`` (or ``E[xi_{1/T}^q]``).

    Returns ``(displayed, derived)``: the first with exponents ``(2 + eps) q``
    and ``(2 - eps) q``, the second with ``2 (1 + eps) q`` and ``2 (1 - eps) q``
    as the weight ``f_eps`` produces.
    """
    eps, c = spec.epsilon, spec.c
    gauss = math.sqrt(c / (c - q))
    if inverse:
        displayed = (T + 1) ** ((2.0 - eps) * q) / T ** (2.0 * q)
        derived = (T + 1) ** (2.0 * (1.0 - eps) * q) / T ** (2.0 * q)
    else:
        displayed = T ** (2.0 * q) / (T - 1) ** ((2.0 + eps) * q)
        derived = T ** (2.0 * q) / (T - 1) ** (2.0 * (1.0 + eps) * q)
    return displayed * gauss, derived * gauss


@dataclass
class MomentBoundRow:
    T: float
    mean: float
    se: float
    bound_displayed: float
    bound_derived: float
    n_seeds: int

    @property
    def weaker_bound(self) -> float:
        return max(self.bound_displayed, self.bound_derived)

    @property
    def passed(self) -> bool:
        return self.mean - 3.0 * self.se <= self.weaker_bound


def check_moment_bound(spec: WSpec, q: float, T_list, n_seeds: int = 1000, n: int = 128,
                       base_seed: int = 0, inverse: bool = False) -> list[MomentBoundRow]:
    from .brownian import BrownianPathStore

    if not (1.0 < q < spec.c):
        raise DomainError("need 1 < q < c")
    T_list = [int(T) for T in T_list]
    if any(T < 2 for T in T_list):
        raise DomainError("horizons must be integers >= 2")
    samples = np.empty((len(T_list), n_seeds))
    for k in range(n_seeds):
        store = BrownianPathStore(base_seed + k)
        for r, T in enumerate(T_list):
            horizon = 1.0 / T if inverse else float(T)
            samples[r, k] = compute_xi_T(store, spec, horizon, n).xi_T ** q
    rows = []
    for r, T in enumerate(T_list):
        disp, der = moment_bounds(spec, q, T, inverse=inverse)
        s = samples[r]
        rows.append(MomentBoundRow(T=1.0 / T if inverse else float(T), mean=float(s.mean()),
                                   se=float(s.std(ddof=1) / math.sqrt(n_seeds)),
                                   bound_displayed=disp, bound_derived=der, n_seeds=n_seeds))
    return rows


def constant_chain_rhs(spec: WSpec, xi: float) -> float:
    return 256.0 * spec.c * math.log(4.0 * xi + 1.0) + 8192.0


@dataclass
class ChainCheck:
    lhs: float
    rhs: float
    xi_used: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def ok(self) -> bool:
        return self.lhs <= self.rhs


def check_constant_chain(M_lower: float, xi: XiEstimate, spec: WSpec, window) -> ChainCheck:
    """``M^2 <= 256 c ln(4 xi + 1) + 8192`` with ``xi`` over the horizons covering ``window``.

    Both sides are truncated estimates, so a pass is evidence rather than
    proof; a failure on a covered window points at a bug.
    """
    t_min, t_max = window
    if not xi.covers(t_min, t_max):
        raise DomainError(f"xi horizons do not cover the window [{t_min}, {t_max}]")
    need_hi = max(1, math.ceil(t_max - 1e-12))
    need_lo = max(1, math.floor(1.0 / t_min + 1e-12))
    used = [xi.terms[float(k)] for k in range(1, need_hi + 1)]
    used += [xi.terms[1.0 / k] for k in range(2, need_lo + 1)]
    xi_used = max(used)
    return ChainCheck(lhs=M_lower * M_lower, rhs=constant_chain_rhs(spec, xi_used), xi_used=xi_used)


def _log_a(spec: WSpec, t: float) -> float:
    return math.log(t) + spec.epsilon * abs(math.log(t))


def i2_closed_form(spec: WSpec, t: float, h: float) -> float:
    """``16 sqrt(c) sqrt(h ln(a/h))`` with ``ln a = ln t + eps |ln t|``."""
    return 16.0 * math.sqrt(spec.c) * math.sqrt(h * (_log_a(spec, t) - math.log(h)))


def i3_closed_form(spec: WSpec, t: float, h: float) -> float:
    """``8 sqrt(c) sqrt(2 pi) sqrt(a) (1 - erf(sqrt(ln(a/h)/2)))``."""
    log_a = _log_a(spec, t)
    x = math.sqrt((log_a - math.log(h)) / 2.0)
    return 8.0 * math.sqrt(spec.c) * math.sqrt(2.0 * math.pi) * math.exp(0.5 * log_a) * math.erfc(x)


def i3_bound(spec: WSpec, h: float) -> float:
    return 16.0 * math.sqrt(spec.c) * math.sqrt(math.pi) * math.sqrt(h)


def i3_bound_half(spec: WSpec, h: float) -> float:
    """Sharper form ``16 sqrt(c) sqrt(h) / sqrt(ln 2)``, valid for ``h <= a/2``."""
    return 16.0 * math.sqrt(spec.c) * math.sqrt(h) / math.sqrt(math.log(2.0))
