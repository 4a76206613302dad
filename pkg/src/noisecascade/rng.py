"""Counter-based pseudo-random generator with a fully documented algorithm.

Every stochastic component of this package draws from :class:`Rng` so that a
run is reproducible from its integer seed alone, in any implementation of the
same algorithm:

* state: 64-bit ``key`` and a 64-bit draw counter ``ctr`` starting at 0;
* ``key = mix64(seed XOR fnv1a64(tag))`` where ``tag`` names the stream
  ("init", "shuffle", ...) and ``mix64`` is the SplitMix64 finalizer
  (``z ^= z>>30; z *= 0xBF58476D1CE4E5B9; z ^= z>>27; z *= 0x94D049BB133111EB;
  z ^= z>>31`` in 64-bit wrapping arithmetic);
* the i-th raw draw (1-based) is ``mix64(key + i * 0x9E3779B97F4A7C15)``;
* ``uniform``: ``(raw >> 11) * 2**-53`` giving a double in [0, 1);
* ``normal``: Box-Muller on consecutive uniform blocks ``u1``, ``u2`` of
  ``ceil(n/2)`` draws each: ``r = sqrt(-2 ln(1-u1))``, ``z = r*cos(2*pi*u2)``
  then ``r*sin(2*pi*u2)``, interleaved pairwise and truncated to ``n``;
* ``permutation(n)``: stable argsort of ``n`` uniforms (Fisher-Yates
  equivalent up to tie-breaking; ties have probability ~0 at 53 bits);
* ``integers(bound, n)``: ``floor(uniform * bound)``.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_U_GAMMA = np.uint64(_GAMMA)
_U_MIX1 = np.uint64(_MIX1)
_U_MIX2 = np.uint64(_MIX2)
_S30, _S27, _S31 = np.uint64(30), np.uint64(27), np.uint64(31)


def mix64(x: int) -> int:
    """SplitMix64 finalizer on a python int (wrapping 64-bit)."""
    x &= _MASK64
    x ^= x >> 30
    x = (x * _MIX1) & _MASK64
    x ^= x >> 27
    x = (x * _MIX2) & _MASK64
    x ^= x >> 31
    return x


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & _MASK64
    return h


def _mix64_vec(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = z ^ (z >> _S30)
        z = z * _U_MIX1
        z = z ^ (z >> _S27)
        z = z * _U_MIX2
        z = z ^ (z >> _S31)
    return z


def child_seed(seed: int, tag: str) -> int:
    """Derived 64-bit seed for an independent sub-stream."""
    return mix64((int(seed) & _MASK64) ^ fnv1a64(tag.encode("utf-8")))


class Rng:
    """Deterministic counter-based generator; one instance per stream."""

    def __init__(self, seed: int, tag: str = ""):
        self.seed = int(seed) & _MASK64
        self.tag = tag
        key = self.seed ^ fnv1a64(tag.encode("utf-8")) if tag else self.seed
        self._key = mix64(key)
        self._ctr = 0

    def derive(self, tag: str) -> "Rng":
        """Independent child stream; same (seed, tag) always yields the same stream."""
        return Rng(self.seed, tag=(self.tag + "/" + tag) if self.tag else tag)

    def raw(self, n: int) -> np.ndarray:
        """Next n raw 64-bit draws."""
        idx = np.arange(self._ctr + 1, self._ctr + n + 1, dtype=np.uint64)
        self._ctr += n
        with np.errstate(over="ignore"):
            z = np.uint64(self._key) + idx * _U_GAMMA
        return _mix64_vec(z)

    def uniform(self, n: int | None = None):
        """Doubles in [0, 1); scalar when n is None."""
        if n is None:
            return float(self.raw(1)[0] >> np.uint64(11)) * 2.0**-53
        return (self.raw(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal(self, n: int) -> np.ndarray:
        m = (n + 1) // 2
        u1 = self.uniform(m)
        u2 = self.uniform(m)
        r = np.sqrt(-2.0 * np.log1p(-u1))
        theta = 2.0 * np.pi * u2
        out = np.empty(2 * m, dtype=np.float64)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n]

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.uniform(n), kind="stable")

    def shuffle(self, arr: np.ndarray) -> np.ndarray:
        return arr[self.permutation(len(arr))]

    def integers(self, bound: int, n: int) -> np.ndarray:
        """Ints in [0, bound); negligible bias for bound << 2**53."""
        return np.floor(self.uniform(n) * bound).astype(np.int64)
