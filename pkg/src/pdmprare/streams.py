"""Deterministic, splittable random streams.

Every random draw in this package comes from a counter-based generator:
a stream is a 64-bit key, and the i-th variate of that stream is

    mix(key + i * GOLDEN)   (mod 2**64)

where mix is the splitmix64 output permutation. Draw i depends only on
(key, i), never on how many variates other streams produced, so results
are independent of scheduling and worker count. Substreams are derived
by folding path components (small ints or short strings) into the parent
key; the stream feeding, say, particle 17 of selection step 3 in
replication 40 has the key

    Stream(seed).child("rep", 40).child("prop", 3, 17).key

and can be reconstructed anywhere from those labels alone.

The block generator mirrors the scalar one: uniform_block(n) returns
exactly the floats n successive uniform() calls would, computed with
vectorized uint64 arithmetic.
"""

from __future__ import annotations

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15  # splitmix64 increment
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
# FNV-1a parameters, used to hash string path components into u64 labels.
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def _fnv1a(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & MASK64
    return h


def _label(component) -> int:
    if isinstance(component, str):
        return _fnv1a(component.encode("utf-8"))
    if isinstance(component, (int, np.integer)):
        return int(component) & MASK64
    raise TypeError(f"stream path components must be int or str, got {type(component).__name__}")


class Stream:
    """One random stream: an immutable key plus a draw counter."""

    __slots__ = ("key", "_count")

    def __init__(self, seed: int):
        if not isinstance(seed, (int, np.integer)):
            raise TypeError("seed must be an integer")
        self.key = _mix(int(seed) & MASK64)
        self._count = 0

    def child(self, *path) -> "Stream":
        """Derive an independent substream; does not consume draws here."""
        k = self.key
        for comp in path:
            # order-sensitive fold: mixing between components keeps
            # ("a", 1) and ("a1",) apart
            k = _mix((k + GOLDEN) ^ _label(comp))
        s = object.__new__(Stream)
        s.key = k
        s._count = 0
        return s

    def uniform(self) -> float:
        """Next uniform in the open interval (0, 1)."""
        self._count += 1
        z = _mix((self.key + self._count * GOLDEN) & MASK64)
        # 53-bit mantissa, offset by half an ulp so 0.0 and 1.0 are excluded
        return ((z >> 11) + 0.5) * 1.1102230246251565e-16  # 2**-53

    def uniform_block(self, n: int) -> np.ndarray:
        """n uniforms in (0, 1), identical to n uniform() calls."""
        if n < 0:
            raise ValueError("n must be nonnegative")
        idx = np.arange(self._count + 1, self._count + n + 1, dtype=np.uint64)
        self._count += n
        z = (np.uint64(self.key) + idx * np.uint64(GOLDEN)) & np.uint64(MASK64)
        z = ((z ^ (z >> np.uint64(30))) * np.uint64(_M1)) & np.uint64(MASK64)
        z = ((z ^ (z >> np.uint64(27))) * np.uint64(_M2)) & np.uint64(MASK64)
        z = z ^ (z >> np.uint64(31))
        return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53

    def pick(self, probs) -> int:
        """Index drawn from a small discrete distribution (linear walk)."""
        u = self.uniform()
        acc = 0.0
        last = 0
        for i, p in enumerate(probs):
            acc += p
            last = i
            if u <= acc:
                return i
        # u landed in the rounding gap above sum(probs); return last index
        return last

    def __repr__(self):
        return f"Stream(key=0x{self.key:016x}, drawn={self._count})"
