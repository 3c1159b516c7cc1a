"""SpaceSaving summary, used as the emergency layer and as a baseline.

Each entry carries ``(key, count, err)``; the true value inserted for a
stored key lies in ``[count - err, count]``, and any absent key has true
value at most the minimum count once the table is full.

The minimum entry is found through a lazily-invalidated heap keyed by
``(count, slot)``, which reproduces "lowest slot wins ties" exactly.
"""

from __future__ import annotations

import heapq
from typing import Iterable, Iterator, NamedTuple

import numpy as np


class StashEntry(NamedTuple):
    key: int
    count: int
    err: int


class SpaceSavingStash:
    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be positive, got {capacity}")
        self.capacity = capacity
        self._keys: list[int] = []
        self._counts: list[int] = []
        self._errs: list[int] = []
        self._slot: dict[int, int] = {}
        self._heap: list[tuple[int, int]] = []
        self.total = 0

    def __len__(self) -> int:
        return len(self._keys)

    def __contains__(self, key) -> bool:
        return int(key) in self._slot

    @property
    def full(self) -> bool:
        return len(self._keys) >= self.capacity

    def _push(self, slot: int) -> None:
        heapq.heappush(self._heap, (self._counts[slot], slot))
        if len(self._heap) > 4 * self.capacity + 64:
            self._heap = [(c, s) for s, c in enumerate(self._counts)]
            heapq.heapify(self._heap)

    def _min_slot(self) -> int:
        heap = self._heap
        while True:
            c, s = heap[0]
            if self._counts[s] == c:
                return s
            heapq.heappop(heap)

    def min_count(self) -> int:
        """Smallest stored count when full, else 0 (absent keys may be 0)."""
        if not self.full:
            return 0
        return self._counts[self._min_slot()]

    def insert(self, key, value: int = 1) -> None:
        if value < 1:
            raise ValueError(f"value must be >= 1, got {value}")
        key = int(key)
        value = int(value)
        self.total += value
        slot = self._slot.get(key)
        if slot is not None:
            self._counts[slot] += value
        elif not self.full:
            slot = len(self._keys)
            self._slot[key] = slot
            self._keys.append(key)
            self._counts.append(value)
            self._errs.append(0)
        else:
            slot = self._min_slot()
            floor = self._counts[slot]
            del self._slot[self._keys[slot]]
            self._slot[key] = slot
            self._keys[slot] = key
            self._counts[slot] = floor + value
            self._errs[slot] = floor
        self._push(slot)

    def insert_many(self, keys: Iterable, values: Iterable | None = None) -> None:
        if values is None:
            for k in keys:
                self.insert(k, 1)
        else:
            for k, v in zip(keys, values):
                self.insert(k, v)

    def query(self, key) -> tuple[int, int]:
        """``(estimate, mpe)`` with ``estimate - mpe <= f(key) <= estimate``."""
        slot = self._slot.get(int(key))
        if slot is not None:
            return self._counts[slot], self._errs[slot]
        m = self.min_count()
        return m, m

    def query_many(self, keys) -> np.ndarray:
        return np.array([self.query(k)[0] for k in keys], dtype=np.int64)

    def entries(self) -> Iterator[StashEntry]:
        for k, c, e in zip(self._keys, self._counts, self._errs):
            yield StashEntry(k, c, e)

    def keys(self) -> list[int]:
        return list(self._keys)

    @classmethod
    def from_entries(cls, capacity: int, entries: Iterable[tuple[int, int, int]]) -> "SpaceSavingStash":
        s = cls(capacity)
        for k, c, e in entries:
            if len(s._keys) >= capacity:
                raise ValueError("more entries than capacity")
            if not 0 <= e <= c:
                raise ValueError(f"invalid entry counts {c}/{e}")
            s._slot[int(k)] = len(s._keys)
            s._keys.append(int(k))
            s._counts.append(int(c))
            s._errs.append(int(e))
            s.total += int(c)
        s._heap = [(c, i) for i, c in enumerate(s._counts)]
        heapq.heapify(s._heap)
        return s


def stash_insert(stash: SpaceSavingStash, key, value: int = 1) -> None:
    stash.insert(key, value)


def stash_query(stash: SpaceSavingStash, key) -> tuple[int, int]:
    return stash.query(key)
