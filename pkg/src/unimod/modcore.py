"""Scalar bound functions and the small lemmas built on them.

The uniform bound is

    w(t, h) = sqrt(h * (1 + ln(t/h) + eps*|ln t|))      for 0 < h <= t
    w(t, h) = w(t, t)                                    for h > t

and the finite-horizon variant ``w_K`` drops the ``eps*|ln t|`` penalty.
Everything here is plain double precision and free of side effects.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = [
    "Variant",
    "WSpec",
    "w",
    "w_array",
    "scaling_factor",
    "psi",
    "psi_inv",
    "mu",
    "f_eps",
    "resolve_sqrt_inequality",
]


class Variant(enum.Enum):
    UNIFORM_W = "w"
    FINITE_HORIZON_WK = "w_K"


@dataclass(frozen=True)
class WSpec:
    """Parameters shared by the bound functions.

    ``epsilon`` weights the ``|ln t|`` penalty of ``w``; ``c`` is the scale
    of ``mu(x) = sqrt(c x)`` in the integral functionals.
    """

    epsilon: float = 0.5
    c: float = 2.0
    variant: Variant = Variant.UNIFORM_W

    def __post_init__(self):
        if isinstance(self.variant, str):
            object.__setattr__(self, "variant", Variant(self.variant))
        if not (0.0 < self.epsilon < 1.0):
            raise DomainError(f"epsilon must be in (0, 1), got {self.epsilon!r}")
        if not self.c > 1.0:
            raise DomainError(f"c must exceed 1, got {self.c!r}")

    @property
    def penalty(self) -> float:
        """Coefficient of ``|ln t|`` actually used by ``w``."""
        return self.epsilon if self.variant is Variant.UNIFORM_W else 0.0


def w(spec: WSpec, t: float, h: float) -> float:
    if not (t > 0.0 and h > 0.0):
        raise DomainError(f"w needs t > 0 and h > 0, got t={t!r}, h={h!r}")
    if h > t:
        h = t
    log_t = math.log(t)
    return math.sqrt(h * (1.0 + (log_t - math.log(h)) + spec.penalty * abs(log_t)))


def w_array(spec: WSpec, t, h) -> np.ndarray:
    """Vectorised ``w`` with numpy broadcasting."""
    t = np.asarray(t, dtype=float)
    h = np.asarray(h, dtype=float)
    if np.any(t <= 0.0) or np.any(h <= 0.0):
        raise DomainError("w needs t > 0 and h > 0")
    h = np.minimum(h, t)
    log_t = np.log(t)
    return np.sqrt(h * (1.0 + (log_t - np.log(h)) + spec.penalty * np.abs(log_t)))


def scaling_factor(spec: WSpec, a: float) -> float:
    """Worst-case distortion ``1 + sqrt(eps |ln a|)`` of ``w`` under ``(t,h) -> (at, ah)``.

    ``w_K`` scales exactly, so its factor is 1.
    """
    if not a > 0.0:
        raise DomainError(f"scale must be positive, got {a!r}")
    return 1.0 + math.sqrt(spec.penalty * abs(math.log(a)))


def psi(x: float) -> float:
    if x < 0.0:
        raise DomainError(f"psi needs x >= 0, got {x!r}")
    return math.expm1(0.5 * x * x)


def psi_inv(y: float) -> float:
    if y < 0.0:
        raise DomainError(f"psi_inv needs y >= 0, got {y!r}")
    return math.sqrt(2.0 * math.log1p(y))


def mu(spec: WSpec, x: float) -> float:
    if x < 0.0:
        raise DomainError(f"mu needs x >= 0, got {x!r}")
    return math.sqrt(spec.c * x)


def f_eps(spec: WSpec, T: float) -> float:
    # Branch values taken literally: the jump at T -> 1+ is never sampled
    # because only integer and inverse-integer horizons are used.
    if not T > 0.0:
        raise DomainError(f"f_eps needs T > 0, got {T!r}")
    eps = spec.epsilon
    if T < 1.0:
        return (1.0 / T + 1.0) ** (2.0 * (1.0 - eps))
    if T == 1.0:
        return 1.0
    return (T - 1.0) ** (-2.0 * (1.0 + eps))


def resolve_sqrt_inequality(a: float, b: float) -> float:
    """Bound ``2a + b**2`` valid for any ``g >= 0`` with ``g <= a + b*sqrt(g)``."""
    if a < 0.0 or b < 0.0:
        raise DomainError("resolve_sqrt_inequality needs a, b >= 0")
    return 2.0 * a + b * b
