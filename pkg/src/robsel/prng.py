"""Deterministic SplitMix64 random streams.

Every random decision in this package flows through :class:`PrngStream`,
so a ``(master_seed, stream_id)`` pair fully determines all outputs,
independent of platform, process, or call ordering.  Streams are cheap;
derive one per logical unit of work (per image, per checkpoint) with
:func:`compose_stream_id` instead of sharing a stream across units, so
that adding work in one place never shifts the draws of another.

The raw generator is counter based: draw ``n`` of a stream is
``mix64(base + n * GOLDEN)`` where ``base`` avalanches the seed pair.
Uniform doubles take the top 53 bits, ``(x >> 11) * 2**-53``, giving the
same sequence on every platform and in any language that reproduces the
integer arithmetic.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB

_U53_SCALE = 2.0 ** -53


def mix64(z: int) -> int:
    """SplitMix64 finalizer: avalanche a 64-bit integer."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX_A) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX_B) & _MASK64
    return z ^ (z >> 31)


def _mix64_vec(z: np.ndarray) -> np.ndarray:
    # uint64 arithmetic wraps modulo 2**64, matching mix64 exactly
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX_A)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX_B)
    return z ^ (z >> np.uint64(31))


def compose_stream_id(*parts: int) -> int:
    """Fold any number of integers into one 64-bit stream id.

    Gives each (role, index, ...) combination its own stream.  The fold
    is order sensitive and avalanched at every step, so structured ids
    like ``(role, image_index)`` do not collide in practice.
    """
    sid = 0
    for part in parts:
        sid = mix64(sid ^ mix64((int(part) + _GOLDEN) & _MASK64))
    return sid


class PrngStream:
    """Counter-based SplitMix64 stream of uniform doubles in ``[0, 1)``.

    ``uniform`` and ``uniforms(n)`` walk the identical counter, so mixing
    scalar and vector draws never changes the sequence.
    """

    def __init__(self, master_seed: int, stream_id: int = 0):
        seed = int(master_seed) & _MASK64
        self._base = mix64(seed ^ mix64((int(stream_id) + _GOLDEN) & _MASK64))
        self._count = 0

    def next_u64(self) -> int:
        """Next raw 64-bit draw."""
        self._count += 1
        return mix64((self._base + self._count * _GOLDEN) & _MASK64)

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        """One double, uniform over ``[low, high)``."""
        u = (self.next_u64() >> 11) * _U53_SCALE
        return low + (high - low) * u

    def uniforms(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """``n`` doubles, identical to ``n`` successive :meth:`uniform` calls."""
        counters = np.uint64(self._count) + np.arange(1, n + 1, dtype=np.uint64)
        self._count += n
        bits = _mix64_vec(np.uint64(self._base) + counters * np.uint64(_GOLDEN))
        u = (bits >> np.uint64(11)).astype(np.float64) * _U53_SCALE
        return low + (high - low) * u

    def normal(self, sigma: float = 1.0) -> float:
        """One N(0, sigma^2) draw."""
        return float(self.normals(1, sigma)[0])

    def normals(self, n: int, sigma: float = 1.0) -> np.ndarray:
        """``n`` N(0, sigma^2) draws via Box-Muller.

        Each normal consumes exactly two uniforms and keeps only the
        cosine branch, so draw positions stay easy to reason about.
        """
        u = self.uniforms(2 * n).reshape(n, 2)
        radius = np.sqrt(-2.0 * np.log(1.0 - u[:, 0]))
        return sigma * radius * np.cos(2.0 * math.pi * u[:, 1])

    def randint(self, n: int) -> int:
        """Uniform integer in ``[0, n)`` as ``floor(u * n)``."""
        if n <= 0:
            raise ValueError(f"randint needs a positive bound, got {n}")
        return min(int(self.uniform() * n), n - 1)

    def permutation(self, n: int) -> list[int]:
        """Fisher-Yates shuffle of ``range(n)``, swapping from the top down."""
        perm = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.randint(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm
