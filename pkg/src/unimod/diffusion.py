"""Coupled time-changed diffusions on one shared Brownian path.

Both processes are written as

    X(t) = x0 + int_0^t b(s, X(s)) ds + B(Lambda(t)),   Lambda(t) = int_0^t sigma^2(s, X(s)) ds

and discretised by explicit Euler for the two integrals.  The Brownian part
is read exactly from the path store at the accumulated clock values, so the
only discretisation error lives in the drift and in the clocks.

Coefficients come from small parametric families whose Lipschitz, bound and
closeness constants are known in closed form, which is what makes the
stability certificate checkable to the last digit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CertificationError, DomainError
from .modcore import WSpec, resolve_sqrt_inequality, w

__all__ = [
    "Constant",
    "AffineClamped",
    "SaturatingDrift",
    "TimeOnlyVariance",
    "TanhSquaredVariance",
    "Shifted",
    "Rescaled",
    "LBC",
    "lbc_constants",
    "certify_lbc",
    "DiffusionModel",
    "PairConstants",
    "pair_constants",
    "NoiseView",
    "CoupledRun",
    "simulate_coupled",
    "StabilityCertificate",
    "certify_stability",
    "euler_maruyama",
]

# max over x of |d/dx tanh(x)^2| = 2 tanh(x) sech(x)^2, attained at tanh(x)^2 = 1/3
_TANH2_LIP = 4.0 / (3.0 * math.sqrt(3.0))


@dataclass(frozen=True)
class Constant:
    value: float

    def __call__(self, t, x):
        return self.value

    def vec(self, t, x):
        return np.full(np.shape(x), self.value, dtype=float)

    @property
    def lipschitz(self):
        return 0.0

    @property
    def bound(self):
        return abs(self.value)

    space_independent = True


@dataclass(frozen=True)
class AffineClamped:
    """``a0 + a1 * clamp(x, -R, R)``."""

    a0: float
    a1: float
    R: float

    def __call__(self, t, x):
        return self.a0 + self.a1 * min(max(x, -self.R), self.R)

    def vec(self, t, x):
        return self.a0 + self.a1 * np.clip(x, -self.R, self.R)

    @property
    def lipschitz(self):
        return abs(self.a1)

    @property
    def bound(self):
        return abs(self.a0) + abs(self.a1) * self.R

    space_independent = False


@dataclass(frozen=True)
class SaturatingDrift:
    """``K * tanh(a1 * x / K)``: slope ``a1`` at the origin, bounded by ``K``."""

    K: float
    a1: float

    def __call__(self, t, x):
        return self.K * math.tanh(self.a1 * x / self.K)

    def vec(self, t, x):
        return self.K * np.tanh(self.a1 * np.asarray(x) / self.K)

    @property
    def lipschitz(self):
        return abs(self.a1)

    @property
    def bound(self):
        return abs(self.K)

    space_independent = False


@dataclass(frozen=True)
class TimeOnlyVariance:
    """``s0^2 (1 + beta sin t)`` with ``|beta| <= 1``."""

    s0: float
    beta: float

    def __post_init__(self):
        if abs(self.beta) > 1.0:
            raise DomainError("TimeOnlyVariance needs |beta| <= 1")

    def __call__(self, t, x):
        return self.s0 * self.s0 * (1.0 + self.beta * math.sin(t))

    def vec(self, t, x):
        return np.full(np.shape(x), self(t, 0.0), dtype=float)

    @property
    def lipschitz(self):
        return 0.0

    @property
    def bound(self):
        return self.s0 * self.s0 * (1.0 + abs(self.beta))

    space_independent = True


@dataclass(frozen=True)
class TanhSquaredVariance:
    """``s0^2 + s1^2 tanh(x)^2``."""

    s0: float
    s1: float

    def __call__(self, t, x):
        th = math.tanh(x)
        return self.s0 * self.s0 + self.s1 * self.s1 * th * th

    def vec(self, t, x):
        th = np.tanh(x)
        return self.s0 * self.s0 + self.s1 * self.s1 * th * th

    @property
    def lipschitz(self):
        return self.s1 * self.s1 * _TANH2_LIP

    @property
    def bound(self):
        return self.s0 * self.s0 + self.s1 * self.s1

    space_independent = False


@dataclass(frozen=True)
class Shifted:
    """``base + shift``; the perturbation used by every experiment."""

    base: object
    shift: float

    def __call__(self, t, x):
        return self.base(t, x) + self.shift

    def vec(self, t, x):
        return self.base.vec(t, x) + self.shift

    @property
    def lipschitz(self):
        return self.base.lipschitz

    @property
    def bound(self):
        return self.base.bound + abs(self.shift)

    @property
    def space_independent(self):
        return self.base.space_independent


@dataclass(frozen=True)
class Rescaled:
    """``scale * base(t, x / scale)``: the coefficient seen by ``Y = scale * X``
    when the base is a drift (for a variance the same map applies to the
    rescaled clock)."""

    base: object
    scale: float

    def __call__(self, t, x):
        return self.scale * self.base(t, x / self.scale)

    def vec(self, t, x):
        return self.scale * self.base.vec(t, np.asarray(x) / self.scale)

    @property
    def lipschitz(self):
        return self.base.lipschitz

    @property
    def bound(self):
        return abs(self.scale) * self.base.bound

    @property
    def space_independent(self):
        return self.base.space_independent


def _split(g):
    shift = 0.0
    while isinstance(g, Shifted):
        shift += g.shift
        g = g.base
    return g, shift


@dataclass(frozen=True)
class LBC:
    L: float
    K: float
    D: float


def lbc_constants(g, g_bar) -> LBC:
    """Constants for the pair ``(g, g_bar)``; the Lipschitz constant is ``g_bar``'s.

    Closeness is exact when both share a base family and differ by shifts;
    otherwise it falls back to the sum of the bounds.
    """
    base, shift = _split(g)
    base_bar, shift_bar = _split(g_bar)
    if base == base_bar:
        D = abs(shift - shift_bar)
    else:
        D = g.bound + g_bar.bound
    return LBC(L=g_bar.lipschitz, K=max(g.bound, g_bar.bound), D=D)


def certify_lbc(g, g_bar, c: LBC, t_range, x_range, n: int = 4096, seed: int = 0,
                nonnegative: bool = False, rtol: float = 1e-12):
    """Sample the box and raise :class:`CertificationError` on any violated constant."""
    rng = np.random.default_rng(seed)
    ts = rng.uniform(*t_range, size=n)
    xs = rng.uniform(*x_range, size=n)
    ys = rng.uniform(*x_range, size=n)
    for t, x, y in zip(ts.tolist(), xs.tolist(), ys.tolist()):
        gx, gbx, gby = g(t, x), g_bar(t, x), g_bar(t, y)
        slack = rtol * (1.0 + abs(gx) + abs(gbx))
        if abs(gbx - gby) > c.L * abs(x - y) + slack:
            raise CertificationError(f"Lipschitz constant {c.L} violated at t={t}, x={x}, y={y}")
        if max(abs(gx), abs(gbx)) > c.K + slack:
            raise CertificationError(f"bound {c.K} violated at t={t}, x={x}")
        if abs(gx - gbx) > c.D + slack:
            raise CertificationError(f"closeness {c.D} violated at t={t}, x={x}")
        if nonnegative and min(gx, gbx) < 0.0:
            raise CertificationError(f"negative variance at t={t}, x={x}")


@dataclass(frozen=True)
class DiffusionModel:
    drift: object
    sigma2: object
    x0: float


@dataclass(frozen=True)
class PairConstants:
    L_b: float
    K_b: float
    D_b: float
    L_sigma: float
    K_sigma: float
    D_sigma: float
    D_x: float


def pair_constants(model: DiffusionModel, model_bar: DiffusionModel) -> PairConstants:
    b = lbc_constants(model.drift, model_bar.drift)
    s = lbc_constants(model.sigma2, model_bar.sigma2)
    return PairConstants(L_b=b.L, K_b=b.K, D_b=b.D, L_sigma=s.L, K_sigma=s.K, D_sigma=s.D,
                         D_x=abs(model.x0 - model_bar.x0))


class NoiseView:
    """``t -> amplitude * base(time_scale * t)``."""

    def __init__(self, base, time_scale: float, amplitude: float):
        self.base = base
        self.time_scale = float(time_scale)
        self.amplitude = float(amplitude)

    def evaluate(self, t: float) -> float:
        return self.amplitude * self.base.evaluate(self.time_scale * t)


@dataclass
class CoupledRun:
    dt: float
    T: float
    t: np.ndarray
    X: np.ndarray
    Xbar: np.ndarray
    Lambda: np.ndarray
    LambdaBar: np.ndarray
    LambdaTilde: np.ndarray
    B_Lambda: np.ndarray
    B_LambdaBar: np.ndarray
    B_LambdaTilde: np.ndarray
    drift_gap: np.ndarray      # running int (b - b_bar)(s, X(s)) ds
    drift_lip: np.ndarray      # running int b_bar(s, X) - b_bar(s, Xbar) ds
    model: DiffusionModel
    model_bar: DiffusionModel
    constants: PairConstants
    shared_path: object = None


def simulate_coupled(model: DiffusionModel, model_bar: DiffusionModel, path, dt: float, T: float,
                     track_tilde: bool = True, certify: bool = True, lbc_seed: int = 0) -> CoupledRun:
    """Explicit Euler on the drift and the clocks, exact Brownian reads.

    ``X_k = x0 + sum_j b(t_j, X_j) dt + B(Lambda_k)`` with
    ``Lambda_{k+1} = Lambda_k + sigma^2(t_k, X_k) dt``; ``Xbar`` likewise on the
    same path.  ``LambdaTilde`` integrates ``sigma_bar^2`` along ``X``.
    """
    if not (dt > 0.0 and T > 0.0):
        raise DomainError("need dt > 0 and T > 0")
    steps = int(round(T / dt))
    if abs(steps * dt - T) > 1e-9 * T:
        raise DomainError(f"T={T} is not a multiple of dt={dt}")
    b, s2 = model.drift, model.sigma2
    bb, s2b = model_bar.drift, model_bar.sigma2
    ev = path.evaluate
    n = steps + 1
    out = {k: np.zeros(n) for k in ("X", "Xb", "L", "Lb", "Lt", "BL", "BLb", "BLt", "gap", "lip")}
    X, Xb = float(model.x0), float(model_bar.x0)
    L = Lb = Lt = 0.0
    BL = BLb = BLt = ev(0.0)
    gap = lip = 0.0
    I = Ib = 0.0
    out["X"][0], out["Xb"][0] = X, Xb
    out["BL"][0] = out["BLb"][0] = out["BLt"][0] = BL
    for k in range(steps):
        tk = k * dt
        drift_x = b(tk, X)
        bar_x = bb(tk, X)
        bar_xb = bb(tk, Xb)
        I += drift_x * dt
        Ib += bar_xb * dt
        gap += (drift_x - bar_x) * dt
        lip += (bar_x - bar_xb) * dt
        L += s2(tk, X) * dt
        Lb += s2b(tk, Xb) * dt
        BL = ev(L)
        BLb = ev(Lb)
        if track_tilde:
            Lt += s2b(tk, X) * dt
            BLt = ev(Lt)
        X = model.x0 + I + BL
        Xb = model_bar.x0 + Ib + BLb
        if not (math.isfinite(X) and math.isfinite(Xb)):
            raise FloatingPointError(f"non-finite state at step {k + 1}")
        j = k + 1
        out["X"][j], out["Xb"][j] = X, Xb
        out["L"][j], out["Lb"][j], out["Lt"][j] = L, Lb, Lt
        out["BL"][j], out["BLb"][j], out["BLt"][j] = BL, BLb, BLt
        out["gap"][j], out["lip"][j] = gap, lip
    constants = pair_constants(model, model_bar)
    if certify:
        R = max(np.abs(out["X"]).max(), np.abs(out["Xb"]).max(), 1.0)
        certify_lbc(b, bb, lbc_constants(b, bb), (0.0, T), (-R, R), n=512, seed=lbc_seed)
        certify_lbc(s2, s2b, lbc_constants(s2, s2b), (0.0, T), (-R, R), n=512, seed=lbc_seed,
                    nonnegative=True)
    return CoupledRun(dt=dt, T=steps * dt, t=np.arange(n) * dt, X=out["X"], Xbar=out["Xb"],
                      Lambda=out["L"], LambdaBar=out["Lb"], LambdaTilde=out["Lt"],
                      B_Lambda=out["BL"], B_LambdaBar=out["BLb"], B_LambdaTilde=out["BLt"],
                      drift_gap=out["gap"], drift_lip=out["lip"], model=model,
                      model_bar=model_bar, constants=constants, shared_path=path)


def _w0(spec: WSpec, t: float, h: float) -> float:
    # A zero clock or a zero clock gap means the Brownian term vanishes identically.
    if t <= 0.0 or h <= 0.0:
        return 0.0
    return w(spec, t, h)


def _pair_ratios(spec: WSpec, u, v, bu, bv) -> float:
    best = 0.0
    for a, b_, fa, fb in zip(u.tolist(), v.tolist(), bu.tolist(), bv.tolist()):
        hi, h = max(a, b_), abs(a - b_)
        if h > 0.0 and hi > 0.0:
            best = max(best, abs(fa - fb) / w(spec, hi, h))
    return best


@dataclass
class StabilityCertificate:
    T: float
    gamma: float
    a1: float
    a2: float
    a3: float
    a4: float
    a5: float
    rhs: float
    M_used: float
    passed: bool
    tolerance: float = 1e-3
    gronwall_ok: bool = True
    clock_ok: bool = True
    broken_terms: list = field(default_factory=list)
    decomposition_residual: float = 0.0

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def certify_stability(run: CoupledRun, spec: WSpec, tolerance: float = 1e-3) -> StabilityCertificate:
    """Check ``gamma(T) <= 1 + 2 e^{2 L_b T} [ ... ]`` term by term.

    ``M`` is the largest ratio over exactly the clock pairs the run read, so
    every Brownian term is bounded by construction and a failure points at
    the term (or the Gronwall step) that broke.
    """
    c = run.constants
    T, dt, t = run.T, run.dt, run.t
    e = run.X - run.Xbar
    gamma = float(np.abs(e).max())
    M = max(_pair_ratios(spec, run.Lambda, run.LambdaTilde, run.B_Lambda, run.B_LambdaTilde),
            _pair_ratios(spec, run.LambdaTilde, run.LambdaBar, run.B_LambdaTilde, run.B_LambdaBar))

    a1 = c.D_x
    a2 = T * c.D_b
    a3 = c.L_b * T * gamma
    a4 = M * _w0(spec, T * c.K_sigma, T * c.D_sigma)
    a5 = M * _w0(spec, T * c.K_sigma, T * c.L_sigma * gamma)
    slack = 1.0 + tolerance

    A1 = run.X[0] - run.Xbar[0]
    A4 = run.B_Lambda - run.B_LambdaTilde
    A5 = run.B_LambdaTilde - run.B_LambdaBar
    resid = float(np.abs(A1 + run.drift_gap + run.drift_lip + A4 + A5 - e).max())
    scale = 1.0 + np.abs(e).max()
    int_abs_e = np.concatenate([[0.0], np.cumsum(np.abs(e[:-1])) * dt])
    broken = []
    if abs(A1) > a1 * slack + 1e-12:
        broken.append("A1")
    if np.any(np.abs(run.drift_gap) > t * c.D_b * slack + 1e-12 * scale):
        broken.append("A2")
    if np.any(np.abs(run.drift_lip) > c.L_b * int_abs_e * slack + 1e-12 * scale):
        broken.append("A3")
    lim4 = np.array([M * _w0(spec, tk * c.K_sigma, tk * c.D_sigma) for tk in t.tolist()])
    if np.any(np.abs(A4) > lim4 * slack + 1e-12 * scale):
        broken.append("A4")
    lim5 = np.array([M * _w0(spec, tk * c.K_sigma, c.L_sigma * ie) for tk, ie in
                     zip(t.tolist(), int_abs_e.tolist())])
    if np.any(np.abs(A5) > lim5 * slack + 1e-12 * scale):
        broken.append("A5")
    if resid > 1e-9 * scale:
        broken.append("decomposition")

    delta = a1 + a2 + a4
    gronwall = np.exp(c.L_b * t) * (delta + a5)
    gronwall_ok = bool(np.all(np.abs(e) <= gronwall * slack + 1e-12 * scale))
    clock_ok = bool(
        np.all(np.diff(run.Lambda) >= 0.0) and np.all(np.diff(run.LambdaBar) >= 0.0)
        and np.all(np.diff(run.LambdaTilde) >= 0.0)
        and np.all(run.Lambda <= t * c.K_sigma * slack + 1e-12)
        and np.all(run.LambdaTilde <= t * c.K_sigma * slack + 1e-12)
        and np.all(run.LambdaBar <= t * c.K_sigma * slack + 1e-12)
    )
    grow = 2.0 * math.exp(2.0 * c.L_b * T)
    w_lip = _w0(spec, T * c.K_sigma, T * c.L_sigma)
    rhs = 1.0 + grow * (a1 + a2 + a4 + M * M * w_lip * w_lip)
    # gamma > 1: the Gronwall bound is of the form gamma <= a + b sqrt(gamma).
    if gamma > 1.0:
        eb = math.exp(c.L_b * T)
        if gamma > resolve_sqrt_inequality(eb * delta, eb * M * w_lip) * slack:
            broken.append("sqrt-step")
    passed = gamma <= rhs * slack and not broken and gronwall_ok
    return StabilityCertificate(T=T, gamma=gamma, a1=a1, a2=a2, a3=a3, a4=a4, a5=a5, rhs=rhs,
                                M_used=M, passed=bool(passed), tolerance=tolerance,
                                gronwall_ok=gronwall_ok, clock_ok=clock_ok, broken_terms=broken,
                                decomposition_residual=resid)


def euler_maruyama(model: DiffusionModel, dt: float, T: float, n_paths: int, seed: int = 0) -> np.ndarray:
    """Ito-form Euler-Maruyama terminal values, for distributional cross-checks only."""
    rng = np.random.default_rng(seed)
    steps = int(round(T / dt))
    x = np.full(n_paths, float(model.x0))
    drift = np.vectorize(model.drift, otypes=[float])
    var = np.vectorize(model.sigma2, otypes=[float])
    for k in range(steps):
        tk = k * dt
        x = x + drift(tk, x) * dt + np.sqrt(var(tk, x) * dt) * rng.standard_normal(n_paths)
    return x
