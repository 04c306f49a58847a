"""Uniform-in-time moduli of continuity for Brownian paths, their
certificates, and stability bounds for time-changed diffusions."""

__version__ = "0.1.0"

from .errors import CertificationError, ConfigError, DomainError, ResourceError
from .modcore import Variant, WSpec, w, w_array, scaling_factor, psi, psi_inv, mu, f_eps
from .brownian import BrownianPathStore, ScaledPathView, DeterministicPath, sample_grid

__all__ = [
    "__version__",
    "CertificationError",
    "ConfigError",
    "DomainError",
    "ResourceError",
    "Variant",
    "WSpec",
    "w",
    "w_array",
    "scaling_factor",
    "psi",
    "psi_inv",
    "mu",
    "f_eps",
    "BrownianPathStore",
    "ScaledPathView",
    "DeterministicPath",
    "sample_grid",
]
