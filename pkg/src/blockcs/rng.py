"""Deterministic, platform-independent random number generation.

All randomness in the toolkit flows through ``Rng`` so that runs are
bit-reproducible across machines.  The generator is SplitMix64: output k of a
stream seeded with s is ``mix64(s + k * GAMMA)`` (all arithmetic mod 2**64),
which allows whole blocks of the stream to be produced vectorised.  Gaussian
variates use the Box-Muller transform on pairs of uniforms.
"""

from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1

# (x >> 11) has 53 random bits; scaling by 2**-53 gives a double in [0, 1).
_INV_2_53 = float(2.0**-53)


def _mix64(v: np.ndarray) -> np.ndarray:
    v = (v ^ (v >> np.uint64(30))) * _MIX1
    v = (v ^ (v >> np.uint64(27))) * _MIX2
    return v ^ (v >> np.uint64(31))


class Rng:
    """SplitMix64 stream with uniform, integer and Gaussian draws."""

    def __init__(self, seed: int):
        self._seed = np.uint64(seed & _MASK64)
        self._count = 0  # raw 64-bit words consumed so far

    @property
    def seed(self) -> int:
        return int(self._seed)

    def raw(self, n: int) -> np.ndarray:
        """Next ``n`` raw uint64 words of the stream."""
        ks = np.arange(self._count + 1, self._count + n + 1, dtype=np.uint64)
        self._count += n
        return _mix64(ks * _GAMMA + self._seed)

    def uniform(self, shape=None, low: float = 0.0, high: float = 1.0) -> np.ndarray | float:
        """Uniform doubles in [low, high); scalar when shape is None."""
        n = 1 if shape is None else int(np.prod(shape))
        u = (self.raw(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53
        out = low + (high - low) * u
        return float(out[0]) if shape is None else out.reshape(shape)

    def normal(self, shape, std: float = 1.0) -> np.ndarray:
        """I.i.d. zero-mean Gaussians via Box-Muller.

        Consumes 2*ceil(n/2) words: the first half feeds the radius term
        (mapped to (0, 1] so the log is finite), the second half the angle.
        """
        n = int(np.prod(shape))
        m = (n + 1) // 2
        words = self.raw(2 * m)
        u1 = ((words[:m] >> np.uint64(11)).astype(np.float64) + 1.0) * _INV_2_53
        u2 = (words[m:] >> np.uint64(11)).astype(np.float64) * _INV_2_53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.empty(2 * m, dtype=np.float64)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        return (std * z[:n]).reshape(shape)

    def randbelow(self, n: int) -> int:
        """Unbiased uniform integer in [0, n) by rejection sampling."""
        if n <= 0:
            raise ValueError("randbelow requires n >= 1")
        limit = _MASK64 + 1 - ((_MASK64 + 1) % n)
        while True:
            x = int(self.raw(1)[0])
            if x < limit:
                return x % n

    def shuffle(self, items: np.ndarray) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> np.ndarray:
        idx = np.arange(n)
        self.shuffle(idx)
        return idx
