"""Line-oriented ``key = value`` run configuration.

Top-level keys configure the run; ``[section]`` headers scope the numeric
parameters of one subcommand.  Unknown keys and sections are errors, and
every error names its line.  ``dump_config`` writes a file that parses back
to an equal :class:`RunConfig`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigError, DomainError
from .modcore import Variant, WSpec

__all__ = ["COMMANDS", "SECTION_DEFAULTS", "RunConfig", "parse_config", "dump_config", "seed_list"]

COMMANDS = ("modulus", "grr", "stability", "rates41", "rates42", "report")
_U64 = (1 << 64) - 1


def _int_list(text: str) -> list:
    items = [p.strip() for p in text.split(",") if p.strip()]
    if not items:
        raise ValueError("empty list")
    return [int(p) for p in items]


def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


# section -> key -> (parser, default, validator, description of the domain)
SECTION_DEFAULTS = {
    "modulus": {
        "t_min": (float, 0.125, _pos, "> 0"),
        "t_max": (float, 8.0, _pos, "> 0"),
        "levels": (int, 7, lambda x: x >= 1, ">= 1"),
        "max_points": (int, 20_000, _pos, "> 0"),
    },
    "grr": {
        "T": (float, 1.0, _pos, "> 0"),
        "n": (int, 256, lambda x: x >= 2, ">= 2"),
        "n_pairs": (int, 1000, _pos, "> 0"),
    },
    "stability": {
        "T": (float, 4.0, _pos, "> 0"),
        "dt": (float, 2.0 ** -10, _pos, "> 0"),
        "drift_K": (float, 2.0, _pos, "> 0"),
        "drift_slope": (float, -1.0, math.isfinite, "finite"),
        "shift_b": (float, 0.1, math.isfinite, "finite"),
        "s0": (float, 1.0, _pos, "> 0"),
        "s1": (float, 0.5, _nonneg, ">= 0"),
        "shift_sigma": (float, 0.05, _nonneg, ">= 0"),
        "shift_x": (float, 0.1, math.isfinite, "finite"),
    },
    "rates41": {
        "alpha": (float, 0.5, _pos, "> 0"),
        "eta": (float, 0.25, _pos, "> 0"),
        "N_grid": (_int_list, [2 ** k for k in range(4, 13)], lambda v: all(n > 2 for n in v), "integers > 2"),
        "T": (float, 4.0, _pos, "> 0"),
        "dt": (float, 2.0 ** -16, _pos, "> 0"),
        "D_b": (float, 0.25, math.isfinite, "finite"),
        "D_sigma": (float, 1.0, _nonneg, ">= 0"),
        "D_x": (float, 0.25, math.isfinite, "finite"),
    },
    "rates42": {
        "alpha": (float, 1.0, _pos, "> 0"),
        "eta": (float, 0.25, _pos, "> 0"),
        "N_grid": (_int_list, [2 ** k for k in range(4, 13)], lambda v: all(n > 2 for n in v), "integers > 2"),
        "T": (float, 4.0, _pos, "> 0"),
        "dt": (float, 2.0 ** -10, _pos, "> 0"),
        "D_b": (float, 0.25, math.isfinite, "finite"),
        "D_sigma": (float, 1.0, _nonneg, ">= 0"),
        "D_x": (float, 0.25, math.isfinite, "finite"),
    },
    "report": {},
}

_TOP = ("command", "epsilon", "c", "variant", "seed", "seeds", "out", "workers", "tolerance")


def _defaults(section: str) -> dict:
    return {k: (list(v[1]) if isinstance(v[1], list) else v[1])
            for k, v in SECTION_DEFAULTS[section].items()}


@dataclass
class RunConfig:
    command: str = "modulus"
    spec: WSpec = field(default_factory=WSpec)
    seed: int = 0
    seeds: int = 1
    output_dir: str = "out"
    workers: int = 1
    tolerance: float | None = None
    params: dict = field(default_factory=lambda: {s: _defaults(s) for s in SECTION_DEFAULTS})

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}", key="command")
        if not (0 <= self.seed <= _U64):
            raise ConfigError("seed must be an unsigned 64-bit integer", key="seed")
        if self.seeds < 1 or self.seed + self.seeds - 1 > _U64:
            raise ConfigError("seeds must be >= 1 and stay within 64 bits", key="seeds")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1", key="workers")
        if self.tolerance is not None and not self.tolerance > 0.0:
            raise ConfigError("tolerance must be positive", key="tolerance")

    def section(self, name: str | None = None) -> dict:
        return self.params[name or self.command]

    @property
    def seed_list(self) -> list:
        return seed_list(self.seed, self.seeds)


def seed_list(base: int, count: int) -> list:
    return [base + i for i in range(count)]


def _convert(parser, key, text, line):
    try:
        return parser(text)
    except (TypeError, ValueError):
        raise ConfigError(f"cannot parse {text!r} for key {key!r}", line=line, key=key) from None


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    """Parse ``text``; ``overrides`` (top-level keys, e.g. from flags) win over the file."""
    top: dict = {}
    params = {s: _defaults(s) for s in SECTION_DEFAULTS}
    section = None
    seen: set = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", line=lineno)
            section = line[1:-1].strip()
            if section not in SECTION_DEFAULTS:
                raise ConfigError(f"unknown section [{section}]", line=lineno, key=section)
            continue
        if "=" not in line:
            raise ConfigError(f"expected key=value, got {raw.strip()!r}", line=lineno)
        key, value = (p.strip() for p in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", line=lineno)
        full = f"{section}.{key}" if section else key
        if full in seen:
            raise ConfigError(f"duplicate key {full!r}", line=lineno, key=full)
        seen.add(full)
        if section is None:
            if key not in _TOP:
                raise ConfigError(f"unknown key {key!r}", line=lineno, key=key)
            top[key] = (value, lineno)
        else:
            table = SECTION_DEFAULTS[section]
            if key not in table:
                raise ConfigError(f"unknown key {key!r} in [{section}]", line=lineno, key=full)
            parser, _, ok, domain = table[key]
            v = _convert(parser, full, value, lineno)
            if not ok(v):
                raise ConfigError(f"{full} must be {domain}, got {value!r}", line=lineno, key=full)
            params[section][key] = v
    for key, value in (overrides or {}).items():
        if value is not None:
            top[key] = (value, None)
    return _build(top, params)


def _build(top: dict, params: dict) -> RunConfig:
    def get(key, parser, default):
        if key not in top:
            return default
        value, line = top[key]
        if not isinstance(value, str):
            return value
        return _convert(parser, key, value, line)

    def line_of(key):
        return top[key][1] if key in top else None

    eps = get("epsilon", float, 0.5)
    c = get("c", float, 2.0)
    variant = get("variant", str, Variant.UNIFORM_W.value)
    try:
        variant = Variant(variant)
    except ValueError:
        raise ConfigError(f"variant must be one of {[v.value for v in Variant]}",
                          line=line_of("variant"), key="variant") from None
    if not (0.0 < eps < 1.0):
        raise ConfigError(f"epsilon must be in (0, 1), got {eps!r}", line=line_of("epsilon"), key="epsilon")
    if not c > 1.0:
        raise ConfigError(f"c must exceed 1, got {c!r}", line=line_of("c"), key="c")
    try:
        spec = WSpec(epsilon=eps, c=c, variant=variant)
    except DomainError as exc:  # pragma: no cover - guarded above
        raise ConfigError(str(exc)) from None
    tol = get("tolerance", float, None)
    cfg_kwargs = dict(
        command=get("command", str, "modulus"),
        spec=spec,
        seed=get("seed", int, 0),
        seeds=get("seeds", int, 1),
        output_dir=get("out", str, "out"),
        workers=get("workers", int, 1),
        tolerance=tol,
        params=params,
    )
    try:
        return RunConfig(**cfg_kwargs)
    except ConfigError as exc:
        raise ConfigError(str(exc), line=line_of(exc.key), key=exc.key) from None


def _fmt(v) -> str:
    if isinstance(v, list):
        return ",".join(str(int(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(cfg: RunConfig) -> str:
    """Serialise ``cfg`` so that ``parse_config(dump_config(cfg)) == cfg``."""
    lines = [
        f"command = {cfg.command}",
        f"epsilon = {cfg.spec.epsilon!r}",
        f"c = {cfg.spec.c!r}",
        f"variant = {cfg.spec.variant.value}",
        f"seed = {cfg.seed}",
        f"seeds = {cfg.seeds}",
        f"out = {cfg.output_dir}",
        f"workers = {cfg.workers}",
    ]
    if cfg.tolerance is not None:
        lines.append(f"tolerance = {cfg.tolerance!r}")
    for section, table in cfg.params.items():
        if not table:
            continue
        lines.append("")
        lines.append(f"[{section}]")
        for key, value in table.items():
            lines.append(f"{key} = {_fmt(value)}")
    return "\n".join(lines) + "\n"

