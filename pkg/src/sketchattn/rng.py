"""Portable seeded random streams.

Every random draw in the package goes through :class:`Xoshiro256`, so an
experiment seed reproduces the same numbers on any platform.

Algorithm (xoshiro256**, Blackman & Vigna 2018), all arithmetic mod 2**64::

    result = rotl(s1 * 5, 7) * 9
    t  = s1 << 17
    s2 ^= s0;  s3 ^= s1;  s1 ^= s2;  s0 ^= s3
    s2 ^= t;   s3 = rotl(s3, 45)

The four state words are filled from the seed with SplitMix64::

    x += 0x9E3779B97F4A7C15
    z = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    out = z ^ (z >> 31)

Doubles take the top 53 bits: ``(next() >> 11) * 2**-53`` in [0, 1).
Bounded integers use rejection on ``next() % n`` above the largest
multiple of ``n`` below 2**64, so they are exactly uniform.

Normal variates use the basic Box-Muller transform on two uniforms
``u1, u2``: with ``r = sqrt(-2 ln(1 - u1))`` the pair
``(r cos 2 pi u2, r sin 2 pi u2)`` is emitted cos-first, sin-second.

Streams for grid cells are derived with :func:`split`, which folds each
cell coordinate into the seed through the SplitMix64 finalizer.
"""

import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_TWO_PI = 2.0 * math.pi
_INV_2_53 = 1.0 / (1 << 53)


def _mix64(z):
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def splitmix64(x):
    """One SplitMix64 step. Returns ``(new_state, output)``."""
    x = (x + GOLDEN) & MASK64
    return x, _mix64(x)


def split(seed, *cell):
    """Derive a child seed for the grid cell ``cell`` under ``seed``.

    Distinct cell coordinates give unrelated 64-bit seeds; the result only
    depends on the integers passed in, never on call order.
    """
    h = _mix64((int(seed) + GOLDEN) & MASK64)
    for c in cell:
        h = _mix64(((h ^ (int(c) & MASK64)) + GOLDEN) & MASK64)
    return h


class Xoshiro256:
    """xoshiro256** generator with uniform, integer and normal draws."""

    def __init__(self, seed=0):
        x = int(seed) & MASK64
        s = []
        for _ in range(4):
            x, out = splitmix64(x)
            s.append(out)
        if not any(s):
            s[0] = 1
        self._s = s
        self._spare = None
        self.seed = int(seed)

    def next_u64(self):
        s0, s1, s2, s3 = self._s
        r = (s1 * 5) & MASK64
        r = (((r << 7) | (r >> 57)) & MASK64) * 9 & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) | (s3 >> 19)) & MASK64
        self._s = [s0, s1, s2, s3]
        return r

    def random(self):
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * _INV_2_53

    def integers(self, n):
        """Uniform integer in ``[0, n)``."""
        if n < 1:
            raise ValueError(f"upper bound must be >= 1, got {n}")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def normal(self):
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1 = self.random()
        u2 = self.random()
        r = math.sqrt(-2.0 * math.log(1.0 - u1))
        self._spare = r * math.sin(_TWO_PI * u2)
        return r * math.cos(_TWO_PI * u2)

    def uniform_array(self, shape, low=0.0, high=1.0):
        size = int(np.prod(shape))
        out = np.fromiter((self.random() for _ in range(size)), dtype=np.float64, count=size)
        return (low + (high - low) * out).reshape(shape)

    def normal_array(self, shape):
        """Standard normals filled in row-major order."""
        size = int(np.prod(shape))
        return np.fromiter((self.normal() for _ in range(size)), dtype=np.float64, count=size).reshape(shape)

    def choice(self, population, d, replace=True):
        """``d`` indices into ``range(population)``.

        Without replacement this is a partial Fisher-Yates shuffle, so the
        result is a uniformly random ordered d-subset.
        """
        if replace:
            return np.array([self.integers(population) for _ in range(d)], dtype=np.int64)
        if d > population:
            raise ValueError(f"cannot draw {d} distinct indices from {population}")
        pool = list(range(population))
        for i in range(d):
            j = i + self.integers(population - i)
            pool[i], pool[j] = pool[j], pool[i]
        return np.array(pool[:d], dtype=np.int64)


def seeded_rng(seed, *cell):
    """Generator for ``seed``, or for the derived cell stream when ``cell`` is given."""
    return Xoshiro256(split(seed, *cell) if cell else seed)
