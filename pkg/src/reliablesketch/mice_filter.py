"""Two-row conservative-update filter that stands in for the first layer.

Counters saturate at the first layer's threshold. A key is absorbed while
either of its two counters has headroom; once both are saturated the key
is an elephant and its value is forwarded to the bucket layers.
"""

from __future__ import annotations

import numpy as np

from .hashing import derive_seed, hash64

FILTER_SEED_TAGS = (0xF1_0001, 0xF1_0002)


class MiceFilter:
    def __init__(self, width: int, cap: int, seed: int = 0, filter_bits: int = 8):
        if width < 1:
            raise ValueError(f"filter width must be positive, got {width}")
        if cap < 1:
            raise ValueError(f"filter cap must be positive, got {cap}")
        if cap > (1 << filter_bits) - 1:
            raise ValueError(f"cap {cap} does not fit in {filter_bits}-bit counters")
        self.width = width
        self.cap = cap
        self.filter_bits = filter_bits
        self.seeds = tuple(derive_seed(seed, tag) for tag in FILTER_SEED_TAGS)
        self.counters = np.zeros((2, width), dtype=np.int64)

    def _slots(self, key) -> tuple[int, int]:
        return (
            hash64(self.seeds[0], key) % self.width,
            hash64(self.seeds[1], key) % self.width,
        )

    def insert(self, key, value: int = 1) -> int:
        """Absorb what fits under the cap; return the forwarded remainder."""
        if value < 1:
            raise ValueError(f"value must be >= 1, got {value}")
        i1, i2 = self._slots(key)
        c1 = int(self.counters[0, i1])
        c2 = int(self.counters[1, i2])
        m = min(c1, c2)
        absorbed = min(value, self.cap - m)
        if absorbed > 0:
            target = m + absorbed
            self.counters[0, i1] = max(c1, target)
            self.counters[1, i2] = max(c2, target)
        return value - absorbed

    def query(self, key) -> tuple[int, int]:
        """``(estimate, mpe)``: the absorbed share of ``key`` lies in [0, min counter]."""
        i1, i2 = self._slots(key)
        m = int(min(self.counters[0, i1], self.counters[1, i2]))
        return m, m

    def saturated(self, key) -> bool:
        return self.query(key)[0] >= self.cap

    @property
    def nbytes(self) -> int:
        return 2 * self.width * self.filter_bits // 8


def filter_insert(f: MiceFilter, key, value: int = 1) -> int:
    return f.insert(key, value)


def filter_query(f: MiceFilter, key) -> tuple[int, int]:
    return f.query(key)
