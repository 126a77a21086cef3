"""Seed derivation and the buffered uniform source used by every party."""

from __future__ import annotations

from bisect import bisect_right

import numpy as np

_MASK64 = (1 << 64) - 1

# Stream indices for the parties of one run; trials use split_seed(master, i).
ALICE_STREAM = 1
BOB_STREAM = 2
EVE_STREAM = 3


def mix64(x: int) -> int:
    """splitmix64 finalizer: a bijective 64-bit avalanche mix."""
    x &= _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def split_seed(master: int, i: int) -> int:
    """Child seed ``mix64(master XOR i)`` for stream or trial ``i``."""
    return mix64((int(master) & _MASK64) ^ int(i))


class UniformStream:
    """Seeded source of uniform floats in [0, 1).

    Draws are pulled from a numpy ``Generator`` in blocks; the consumed
    sequence is identical to calling ``Generator.random()`` repeatedly on the
    same seed, so a party's draws only depend on the order it consumes them.
    """

    __slots__ = ("seed", "_gen", "_buf", "_pos", "_block")

    def __init__(self, seed: int, block: int = 4096):
        self.seed = int(seed)
        self._gen = np.random.default_rng(self.seed)
        self._block = block
        self._buf: list[float] = []
        self._pos = 0

    def random(self) -> float:
        if self._pos >= len(self._buf):
            self._buf = self._gen.random(self._block).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u

    def below(self, n: int) -> int:
        """Uniform integer in ``range(n)``."""
        k = int(self.random() * n)
        return k if k < n else n - 1

    def choice(self, cdf: list[float]) -> int:
        """Sample an index from a cumulative distribution (see :func:`draw_index`)."""
        return draw_index(cdf, self.random())

    def subset(self, population: int, k: int) -> list[int]:
        """Uniformly random ``k``-subset of ``range(population)``, sorted.

        Partial Fisher-Yates driven by this stream's draws.
        """
        if not 0 <= k <= population:
            raise ValueError(f"cannot choose {k} of {population}")
        pool = list(range(population))
        for t in range(k):
            j = t + self.below(population - t)
            pool[t], pool[j] = pool[j], pool[t]
        return sorted(pool[:k])


def as_stream(rng) -> "UniformStream | np.random.Generator":
    """Accept an int seed, a :class:`UniformStream` or a numpy Generator."""
    if rng is None:
        return UniformStream(0)
    if isinstance(rng, (int, np.integer)):
        return UniformStream(int(rng))
    return rng


def draw_index(cdf, u: float) -> int:
    """Inverse-CDF sampling: the lowest index ``k`` with ``u < cdf[k]``.

    Zero-probability outcomes are never returned because the comparison is
    strict. If rounding leaves ``u`` at or above the final cumulative value,
    the last outcome with positive probability is returned.
    """
    lo = bisect_right(cdf, u)
    if lo < len(cdf):
        return lo
    k = len(cdf) - 1
    while k > 0 and cdf[k] <= cdf[k - 1]:
        k -= 1
    return k
