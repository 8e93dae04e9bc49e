"""Seeded random number generation with a platform-stable stream.

Built on splitmix64 used as a counter-based generator: draw k consumes
outputs mix(seed + (counter+1)*GOLDEN) ... mix(seed + (counter+k)*GOLDEN).
The integer stream is bit-exact everywhere; float draws are as stable as
the platform's libm. numpy's Generator is deliberately not used here so
that checkpoints and scores stay reproducible across numpy versions.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_U64 = np.uint64
_TWO53_INV = 1.0 / float(1 << 53)


def _mix_int(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def _mix_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _U64(30))) * _U64(_MIX1)
    z = (z ^ (z >> _U64(27))) * _U64(_MIX2)
    return z ^ (z >> _U64(31))


def stable_hash(text: str) -> int:
    """FNV-1a of the UTF-8 bytes; stable across runs and platforms."""
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK
    return h


def derive_seed(global_seed: int, building_id: str, start_index: int) -> int:
    """Per-window seed so scores are independent of scoring order."""
    z = (global_seed & _MASK) ^ stable_hash(building_id) ^ ((start_index * _GOLDEN) & _MASK)
    return _mix_int(z + _GOLDEN)


class Rng:
    """Deterministic generator: identical seed gives an identical draw sequence."""

    def __init__(self, seed: int):
        self.seed = seed & _MASK
        self.counter = 0

    def _raw(self, n: int) -> np.ndarray:
        idx = np.arange(1, n + 1, dtype=np.uint64) + _U64(self.counter & _MASK)
        self.counter += n
        with np.errstate(over="ignore"):
            return _mix_array(_U64(self.seed) + idx * _U64(_GOLDEN))

    def uniform(self, lo: float, hi: float, shape=()) -> np.ndarray:
        """Uniform draws in [lo, hi) as float32."""
        n = int(np.prod(shape)) if shape else 1
        u = (self._raw(n) >> _U64(11)).astype(np.float64) * _TWO53_INV
        out = (lo + (hi - lo) * u).astype(np.float32)
        return out.reshape(shape) if shape else out[0]

    def normal(self, mean: float, stddev: float, shape=()) -> np.ndarray:
        """Gaussian draws via Box-Muller as float32; stddev 0 gives the mean."""
        n = int(np.prod(shape)) if shape else 1
        pairs = (n + 1) // 2
        raw = (self._raw(2 * pairs) >> _U64(11)).astype(np.float64) * _TWO53_INV
        u1 = raw[:pairs] + _TWO53_INV  # keep log argument strictly positive
        u2 = raw[pairs:]
        r = np.sqrt(-2.0 * np.log(u1))
        theta = (2.0 * np.pi) * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        out = (mean + stddev * z).astype(np.float32)
        return out.reshape(shape) if shape else out[0]

    def integer(self, n: int) -> int:
        """One draw in [0, n)."""
        return int(self._raw(1)[0]) % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.integer(i + 1)
            items[i], items[j] = items[j], items[i]

    def spawn(self, key: int) -> "Rng":
        """Independent child stream; key selects the branch deterministically."""
        return Rng(_mix_int((self.seed ^ (key & _MASK)) + _GOLDEN))
