"""Exception types shared across the package."""

from __future__ import annotations


class DomainError(ValueError):
    """An argument lies outside the domain of the function."""


class ResourceError(RuntimeError):
    """A configured memory or size budget would be exceeded."""


class CertificationError(RuntimeError):
    """Declared model constants failed their sampled certification."""


class ConfigError(DomainError):
    """A configuration file or flag could not be parsed or validated."""

    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        self.line = line
        self.key = key
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
