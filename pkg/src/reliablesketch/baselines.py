"""Count-Min and Conservative-Update sketches sharing one counter layout.

Both report the minimum of the ``rows`` mapped counters and never
underestimate. With the same seed and dimensions, CU's estimate is never
above CM's.
"""

from __future__ import annotations

import struct

import numpy as np

from . import _kernels
from .hashing import as_key, derive_seed

FAST_ROWS = 3
ACCURATE_ROWS = 16
ROW_SEED_BASE = 0xC0_0000


class CounterMatrix:
    _MAGIC = b"CMS1"
    _VERSION = 1
    _HDR = struct.Struct("<4sHHQQBB")

    def __init__(self, width: int, rows: int = FAST_ROWS, seed: int = 0,
                 conservative: bool = False, counter_bits: int = 32):
        if width < 1 or rows < 1:
            raise ValueError(f"width and rows must be positive, got {width}, {rows}")
        if counter_bits not in (8, 16, 32, 64):
            raise ValueError("counter_bits must be 8, 16, 32 or 64")
        self.width = width
        self.rows = rows
        self.seed = seed
        self.conservative = conservative
        self.counter_bits = counter_bits
        self.seeds = np.array([derive_seed(seed, ROW_SEED_BASE + r) for r in range(rows)], dtype=np.uint64)
        self.counters = np.zeros((rows, width), dtype=np.int64)

    @classmethod
    def for_memory(cls, memory_bytes: int, rows: int = FAST_ROWS, seed: int = 0,
                   conservative: bool = False, counter_bits: int = 32) -> "CounterMatrix":
        width = memory_bytes * 8 // (counter_bits * rows)
        if width < 1:
            raise ValueError(f"{memory_bytes} bytes cannot hold {rows} rows of {counter_bits}-bit counters")
        return cls(width, rows, seed, conservative, counter_bits)

    @property
    def nbytes(self) -> int:
        return self.rows * self.width * self.counter_bits // 8

    def insert_many(self, keys, values=None) -> None:
        keys = np.ascontiguousarray(keys, dtype=np.uint64)
        if values is None:
            values = np.ones(keys.shape[0], dtype=np.int64)
        else:
            values = np.ascontiguousarray(values, dtype=np.int64)
            if values.size and values.min() < 1:
                raise ValueError("values must be >= 1")
        _kernels.matrix_insert_batch(keys, values, self.counters, self.seeds, self.conservative)

    def insert(self, key, value: int = 1) -> None:
        if value < 1:
            raise ValueError(f"value must be >= 1, got {value}")
        self.insert_many(np.array([as_key(key)], dtype=np.uint64), np.array([value], dtype=np.int64))

    def query_many(self, keys) -> np.ndarray:
        keys = np.ascontiguousarray(keys, dtype=np.uint64)
        out = np.empty(keys.shape[0], dtype=np.int64)
        _kernels.matrix_query_batch(keys, self.counters, self.seeds, out)
        return out

    def query(self, key) -> int:
        return int(self.query_many(np.array([as_key(key)], dtype=np.uint64))[0])

    def snapshot(self) -> bytes:
        head = self._HDR.pack(self._MAGIC, self._VERSION, self.rows, self.width, self.seed,
                              self.counter_bits, int(self.conservative))
        return head + self.counters.astype(f"<u{self.counter_bits // 8}").tobytes()

    @classmethod
    def restore(cls, data: bytes) -> "CounterMatrix":
        if len(data) < cls._HDR.size:
            raise ValueError("truncated header")
        magic, version, rows, width, seed, bits, cons = cls._HDR.unpack_from(data)
        if magic != cls._MAGIC:
            raise ValueError(f"bad magic {magic!r}")
        if version != cls._VERSION:
            raise ValueError(f"unsupported version {version}")
        m = cls(width, rows, seed, bool(cons), bits)
        body = data[cls._HDR.size:]
        if len(body) != m.nbytes:
            raise ValueError("payload length does not match the header")
        m.counters[:] = np.frombuffer(body, dtype=f"<u{bits // 8}").reshape(rows, width)
        return m


def CountMin(width: int, rows: int = FAST_ROWS, seed: int = 0, **kw) -> CounterMatrix:
    return CounterMatrix(width, rows, seed, conservative=False, **kw)


def ConservativeUpdate(width: int, rows: int = FAST_ROWS, seed: int = 0, **kw) -> CounterMatrix:
    return CounterMatrix(width, rows, seed, conservative=True, **kw)


def cm_insert(m: CounterMatrix, key, value: int = 1) -> None:
    if m.conservative:
        raise ValueError("cm_insert on a conservative-update matrix")
    m.insert(key, value)


def cu_insert(m: CounterMatrix, key, value: int = 1) -> None:
    if not m.conservative:
        raise ValueError("cu_insert on a plain count-min matrix")
    m.insert(key, value)


def cm_query(m: CounterMatrix, key) -> int:
    return m.query(key)


cu_query = cm_query
