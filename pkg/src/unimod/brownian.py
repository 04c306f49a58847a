"""Seeded Brownian paths that can be queried at arbitrary times.

A :class:`BrownianPathStore` keeps every materialised ``(time, value)``
pair.  A query to the right of the stored range draws an independent
Gaussian increment; a query between two stored times draws from the
Brownian bridge pinned at its neighbours.  Either way the joint law of all
materialised values is exactly that of a standard Brownian motion, so many
time changes can read one shared path.

Randomness is counter based: the k-th newly materialised point uses the
k-th standard normal of a Philox stream keyed by ``(seed, k // CHUNK)``.
A path is therefore reproduced by its seed and its query history alone.
"""

from __future__ import annotations

import math
import struct
from bisect import bisect_left, bisect_right

import numpy as np

from .errors import DomainError, ResourceError

__all__ = [
    "CHUNK",
    "SNAP",
    "NormalStream",
    "BrownianPathStore",
    "ScaledPathView",
    "DeterministicPath",
    "sample_grid",
]

CHUNK = 1024
SNAP = 1e-12
_MASK64 = (1 << 64) - 1


class NormalStream:
    """Random access to the standard normals of one seed."""

    def __init__(self, seed: int):
        if not (0 <= int(seed) <= _MASK64):
            raise DomainError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
        self.seed = int(seed)
        self._chunks: dict[int, list[float]] = {}

    def _chunk(self, j: int) -> list[float]:
        chunk = self._chunks.get(j)
        if chunk is None:
            bitgen = np.random.Philox(key=self.seed | (j << 64))
            chunk = np.random.Generator(bitgen).standard_normal(CHUNK).tolist()
            self._chunks[j] = chunk
        return chunk

    def __getitem__(self, k: int) -> float:
        return self._chunk(k // CHUNK)[k % CHUNK]

    def block(self, start: int, count: int) -> np.ndarray:
        out = np.empty(count)
        pos = 0
        while pos < count:
            k = start + pos
            j, off = divmod(k, CHUNK)
            take = min(CHUNK - off, count - pos)
            out[pos:pos + take] = self._chunk(j)[off:off + take]
            pos += take
        return out


class BrownianPathStore:
    """Growable, immutable-once-drawn record of one Brownian path.

    A store is single-writer: one worker at a time may query it.
    """

    def __init__(self, seed: int, max_points: int = 5_000_000):
        self.seed = int(seed)
        self.max_points = int(max_points)
        self._normals = NormalStream(seed)
        self._t = [0.0]
        self._v = [0.0]
        self._draws = 0

    def __len__(self) -> int:
        return len(self._t)

    @property
    def draws(self) -> int:
        """Number of normals consumed so far (the next insertion index)."""
        return self._draws

    def _check_room(self, extra: int = 1):
        if len(self._t) + extra > self.max_points:
            raise ResourceError(
                f"path store would exceed max_points={self.max_points}"
            )

    def _locate(self, t: float):
        """Return ``(index, exact)``; ``exact`` means ``t`` snaps to a stored time."""
        ts = self._t
        i = bisect_left(ts, t)
        if i < len(ts) and ts[i] - t <= SNAP:
            return i, True
        if i > 0 and t - ts[i - 1] <= SNAP:
            return i - 1, True
        return i, False

    def evaluate(self, t: float) -> float:
        if not t >= 0.0:
            raise DomainError(f"Brownian time must be >= 0, got {t!r}")
        i, exact = self._locate(t)
        if exact:
            return self._v[i]
        self._check_room()
        ts, vs = self._t, self._v
        z = self._normals[self._draws]
        self._draws += 1
        if i == len(ts):
            value = vs[-1] + math.sqrt(t - ts[-1]) * z
            ts.append(t)
            vs.append(value)
            return value
        t1, t2 = ts[i - 1], ts[i]
        v1, v2 = vs[i - 1], vs[i]
        span = t2 - t1
        mean = v1 + (t - t1) / span * (v2 - v1)
        var = (t - t1) * (t2 - t) / span
        value = mean + math.sqrt(var) * z
        ts.insert(i, t)
        vs.insert(i, value)
        return value

    def evaluate_many(self, times) -> np.ndarray:
        """Evaluate in the given order; sorted queries past the end are vectorised."""
        times = np.asarray(times, dtype=float)
        if times.ndim != 1:
            raise DomainError("times must be one-dimensional")
        if times.size and times[0] > self._t[-1] + SNAP:
            gaps = np.diff(times)
            if gaps.size == 0 or gaps.min() > SNAP:
                return self._extend(times)
        return np.array([self.evaluate(float(t)) for t in times])

    def _extend(self, times: np.ndarray) -> np.ndarray:
        n = times.size
        self._check_room(n)
        z = self._normals.block(self._draws, n)
        self._draws += n
        steps = np.empty(n)
        steps[0] = times[0] - self._t[-1]
        steps[1:] = np.diff(times)
        inc = np.sqrt(steps) * z
        inc[0] += self._v[-1]
        values = np.cumsum(inc)
        self._t.extend(times.tolist())
        self._v.extend(values.tolist())
        return values

    def force(self, t: float, value: float):
        """Pin ``B(t) = value`` without drawing; used to build test paths."""
        if not t >= 0.0:
            raise DomainError(f"Brownian time must be >= 0, got {t!r}")
        i, exact = self._locate(t)
        if exact:
            if self._v[i] != value:
                raise DomainError(f"B({self._t[i]!r}) is already materialised")
            return
        self._check_room()
        self._t.insert(i, float(t))
        self._v.insert(i, float(value))

    def points(self):
        return np.array(self._t), np.array(self._v)

    def materialized(self, lo: float, hi: float):
        """Stored ``(times, values)`` with ``lo <= time <= hi``."""
        i = bisect_left(self._t, lo)
        j = bisect_right(self._t, hi)
        return np.array(self._t[i:j]), np.array(self._v[i:j])

    # Little-endian dump: uint64 count, then count pairs of float64 (time, value).
    def dumps(self) -> bytes:
        n = len(self._t)
        flat = np.empty(2 * n, dtype="<f8")
        flat[0::2] = self._t
        flat[1::2] = self._v
        return struct.pack("<Q", n) + flat.tobytes()

    @classmethod
    def loads(cls, data: bytes, seed: int = 0, **kwargs) -> "BrownianPathStore":
        (n,) = struct.unpack_from("<Q", data, 0)
        flat = np.frombuffer(data, dtype="<f8", count=2 * n, offset=8)
        ts, vs = flat[0::2].tolist(), flat[1::2].tolist()
        if not ts or ts[0] != 0.0 or vs[0] != 0.0:
            raise DomainError("dump must start with the point (0, 0)")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise DomainError("dump times must be strictly increasing")
        store = cls(seed, **kwargs)
        store._t, store._v = ts, vs
        store._draws = n - 1
        return store


class ScaledPathView:
    """``t -> a**-0.5 * B(a t)``, itself a standard Brownian motion."""

    def __init__(self, base, a: float):
        if not a > 0.0:
            raise DomainError(f"scale must be positive, got {a!r}")
        self.base = base
        self.a = float(a)
        self._inv_sqrt_a = 1.0 / math.sqrt(self.a)

    def evaluate(self, t: float) -> float:
        return self._inv_sqrt_a * self.base.evaluate(self.a * t)

    def evaluate_many(self, times) -> np.ndarray:
        return self._inv_sqrt_a * self.base.evaluate_many(self.a * np.asarray(times, dtype=float))

    def materialized(self, lo: float, hi: float):
        ts, vs = self.base.materialized(self.a * lo, self.a * hi)
        return ts / self.a, self._inv_sqrt_a * vs


class DeterministicPath:
    """Wrap an ordinary function so it can stand in for a Brownian path."""

    def __init__(self, func):
        self.func = func
        self._seen: dict[float, float] = {}

    def evaluate(self, t: float) -> float:
        value = self._seen.get(t)
        if value is None:
            value = self._seen[t] = float(self.func(t))
        return value

    def evaluate_many(self, times) -> np.ndarray:
        return np.array([self.evaluate(float(t)) for t in np.asarray(times, dtype=float)])

    def materialized(self, lo: float, hi: float):
        ts = np.array(sorted(t for t in self._seen if lo <= t <= hi))
        return ts, np.array([self._seen[t] for t in ts.tolist()])


def sample_grid(seed: int, times) -> np.ndarray:
    """Values of a fresh path with the given seed at sorted ``times``."""
    times = np.asarray(times, dtype=float)
    if times.ndim != 1:
        raise DomainError("times must be one-dimensional")
    if times.size and (times[0] < 0.0 or np.any(np.diff(times) < 0.0)):
        raise DomainError("times must be sorted and nonnegative")
    store = BrownianPathStore(seed, max_points=max(times.size + 1, 2))
    return store.evaluate_many(times)
