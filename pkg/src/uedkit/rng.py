"""Deterministic counter-based random number generation.

Every stochastic component in the package draws from `Rng`, a SplitMix64
generator in counter form: draw ``i`` of a stream seeded with ``s`` is

    mix64(s + GOLDEN * (i + 1))        (all arithmetic mod 2**64)

where ``mix64`` is the SplitMix64 finalizer.  The construction is stateless
apart from the counter, so identical seeds give identical streams on every
platform and the generator is trivial to reimplement elsewhere.

Derived streams (`Rng.derive`) fold integer/string tags into the seed with
the same mixer, which keeps per-fold / per-trace substreams independent and
reproducible without coordinating counter offsets.
"""

from __future__ import annotations

import math

import numpy as np

_GOLDEN = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def _mix64_int(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(0xBF58476D1CE4E5B9)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _fnv1a(text: str) -> int:
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


class Rng:
    """SplitMix64 stream with an explicit position counter."""

    __slots__ = ("seed", "counter")

    def __init__(self, seed: int, counter: int = 0):
        self.seed = int(seed) & _MASK64
        self.counter = int(counter)

    def derive(self, *tags) -> "Rng":
        """Child stream keyed by integer or string tags."""
        s = self.seed
        for tag in tags:
            t = _fnv1a(tag) if isinstance(tag, str) else int(tag) & _MASK64
            s = _mix64_int((s ^ _mix64_int(t)) + _GOLDEN)
        return Rng(s)

    def _next_block(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            return _mix64_array(np.uint64(self.seed) + np.uint64(_GOLDEN) * idx)

    def random(self, size=None) -> np.ndarray | float:
        """Uniform doubles in [0, 1) with 53-bit resolution."""
        n = 1 if size is None else int(np.prod(size))
        out = (self._next_block(n) >> np.uint64(11)).astype(np.float64) * (2.0**-53)
        if size is None:
            return float(out[0])
        return out.reshape(size)

    def uniform(self, low: float, high: float, size=None):
        return low + (high - low) * self.random(size)

    def normal(self, size=None, mean: float = 0.0, std: float = 1.0):
        """Box-Muller normals; consumes an even number of stream draws."""
        n = 1 if size is None else int(np.prod(size))
        pairs = (n + 1) // 2
        u = self._next_block(2 * pairs)
        # u1 in (0, 1] so log is finite; u2 in [0, 1)
        u1 = ((u[:pairs] >> np.uint64(11)).astype(np.float64) + 1.0) * (2.0**-53)
        u2 = (u[pairs:] >> np.uint64(11)).astype(np.float64) * (2.0**-53)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * math.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        z = mean + std * z
        if size is None:
            return float(z[0])
        return z.reshape(size)

    def integers(self, bound: int, size=None):
        """Uniform integers in [0, bound) (modulo reduction; bias < 2**-32 for desk-scale bounds)."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        n = 1 if size is None else int(np.prod(size))
        out = (self._next_block(n) % np.uint64(bound)).astype(np.int64)
        if size is None:
            return int(out[0])
        return out.reshape(size)

    def permutation(self, n: int) -> np.ndarray:
        """Permutation of range(n) by stable argsort of random keys."""
        keys = self._next_block(n)
        return np.argsort(keys, kind="stable")

    def shuffle(self, values):
        arr = np.asarray(values)
        return arr[self.permutation(len(arr))]

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        if replace:
            return self.integers(n, size=size)
        if size > n:
            raise ValueError("cannot draw more unique values than the population size")
        return self.permutation(n)[:size]
