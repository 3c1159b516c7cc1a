"""Synthetic Zipf traces, trace files, and the exact-count oracle.

Trace file formats:

* text: one record per line, ``key`` or ``key,value`` in decimal;
* binary: repeated little-endian ``(u64 key, u64 value)`` pairs.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Union

import numpy as np

from .hashing import MASK64, derive_seed, hash_array

ZIPF_KEY_TAG = 0x21_9F00
BINARY_SUFFIXES = (".bin", ".dat", ".trace")
_CHUNK_RECORDS = 1 << 16
_REC = np.dtype([("key", "<u8"), ("value", "<u8")])


class TraceFormatError(ValueError):
    pass


class TraceRecord(NamedTuple):
    key: int
    value: int = 1


@dataclass
class Trace:
    """A whole trace held as two aligned arrays."""

    keys: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.keys = np.ascontiguousarray(self.keys, dtype=np.uint64)
        self.values = np.ascontiguousarray(self.values, dtype=np.int64)
        if self.keys.shape != self.values.shape:
            raise ValueError("keys and values differ in length")

    def __len__(self) -> int:
        return self.keys.shape[0]

    def __iter__(self) -> Iterator[TraceRecord]:
        for k, v in zip(self.keys.tolist(), self.values.tolist()):
            yield TraceRecord(k, v)

    @property
    def total(self) -> int:
        return int(self.values.sum())

    @property
    def unit(self) -> bool:
        return bool(np.all(self.values == 1))

    @classmethod
    def from_records(cls, records: Iterable) -> "Trace":
        keys, values = [], []
        for r in records:
            if isinstance(r, tuple):
                k, v = r
            else:
                k, v = r, 1
            keys.append(k)
            values.append(v)
        return cls(np.array(keys, dtype=np.uint64), np.array(values, dtype=np.int64))


PathLike = Union[str, os.PathLike]


def zipf_pmf(n_keys: int, skew: float) -> np.ndarray:
    ranks = np.arange(1, n_keys + 1, dtype=np.float64)
    w = ranks ** (-float(skew))
    return w / w.sum()


def gen_zipf(n_items: int, n_keys: int, skew: float, seed: int = 0, max_value: int = 1) -> Trace:
    """Draw ``n_items`` i.i.d. ranks with P(r) proportional to r**-skew.

    Rank ``r`` becomes a hashed 64-bit key. With ``max_value > 1`` each item
    also gets a uniform weight in ``[1, max_value]``.
    """
    if n_items < 1 or n_keys < 1:
        raise ValueError("n_items and n_keys must be >= 1")
    if skew < 0:
        raise ValueError("skew must be >= 0")
    if max_value < 1:
        raise ValueError("max_value must be >= 1")
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(zipf_pmf(n_keys, skew))
    cdf[-1] = 1.0
    ranks = np.searchsorted(cdf, rng.random(n_items), side="right").astype(np.uint64) + np.uint64(1)
    keys = hash_array(derive_seed(seed & MASK64, ZIPF_KEY_TAG), ranks)
    if max_value == 1:
        values = np.ones(n_items, dtype=np.int64)
    else:
        values = rng.integers(1, max_value, size=n_items, endpoint=True, dtype=np.int64)
    return Trace(keys, values)


def zipf_rank_keys(n_keys: int, seed: int = 0) -> np.ndarray:
    """Keys of ranks 1..n_keys as produced by :func:`gen_zipf` with ``seed``."""
    return hash_array(derive_seed(seed & MASK64, ZIPF_KEY_TAG), np.arange(1, n_keys + 1, dtype=np.uint64))


def _infer_format(path: PathLike, fmt: str | None) -> str:
    if fmt is None:
        fmt = "bin" if Path(path).suffix.lower() in BINARY_SUFFIXES else "text"
    if fmt not in ("bin", "text"):
        raise ValueError(f"unknown trace format {fmt!r}")
    return fmt


def save_trace(path: PathLike, trace: Union[Trace, Iterable], fmt: str | None = None) -> None:
    fmt = _infer_format(path, fmt)
    if not isinstance(trace, Trace):
        trace = Trace.from_records(trace)
    if len(trace) and trace.values.min() < 1:
        raise ValueError("trace values must be >= 1")
    if fmt == "bin":
        rec = np.empty(len(trace), dtype=_REC)
        rec["key"] = trace.keys
        rec["value"] = trace.values
        with open(path, "wb") as fh:
            fh.write(rec.tobytes())
        return
    with open(path, "w", encoding="ascii") as fh:
        unit = trace.unit
        for i in range(0, len(trace), _CHUNK_RECORDS):
            ks = trace.keys[i:i + _CHUNK_RECORDS].tolist()
            if unit:
                fh.write("".join(f"{k}\n" for k in ks))
            else:
                vs = trace.values[i:i + _CHUNK_RECORDS].tolist()
                fh.write("".join(f"{k},{v}\n" for k, v in zip(ks, vs)))


def _parse_line(line: str, lineno: int) -> TraceRecord:
    parts = line.split(",")
    try:
        if len(parts) == 1:
            key, value = int(parts[0]), 1
        elif len(parts) == 2:
            key, value = int(parts[0]), int(parts[1])
        else:
            raise ValueError
    except ValueError:
        raise TraceFormatError(f"line {lineno}: cannot parse {line!r}") from None
    if not 0 <= key <= MASK64:
        raise TraceFormatError(f"line {lineno}: key {key} is not an unsigned 64-bit integer")
    if value < 1:
        raise TraceFormatError(f"line {lineno}: value must be >= 1, got {value}")
    return TraceRecord(key, value)


def _iter_binary_chunks(path: PathLike) -> Iterator[tuple[int, np.ndarray]]:
    offset = 0
    with open(path, "rb") as fh:
        while True:
            buf = fh.read(_CHUNK_RECORDS * _REC.itemsize)
            if not buf:
                return
            if len(buf) % _REC.itemsize:
                bad = offset + len(buf) - len(buf) % _REC.itemsize
                raise TraceFormatError(f"byte offset {bad}: truncated record")
            rec = np.frombuffer(buf, dtype=_REC)
            zero = np.flatnonzero(rec["value"] == 0)
            if zero.size:
                raise TraceFormatError(f"byte offset {offset + int(zero[0]) * _REC.itemsize}: value must be >= 1")
            yield offset, rec
            offset += len(buf)


def load_trace(path: PathLike, fmt: str | None = None) -> Iterator[TraceRecord]:
    """Stream records from a trace file without buffering the whole file."""
    fmt = _infer_format(path, fmt)
    if fmt == "bin":
        for _, rec in _iter_binary_chunks(path):
            for k, v in zip(rec["key"].tolist(), rec["value"].tolist()):
                yield TraceRecord(k, v)
        return
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if line:
                yield _parse_line(line, lineno)


def read_trace(path: PathLike, fmt: str | None = None) -> Trace:
    """Load a whole trace into arrays (chunked, so binary files stay fast)."""
    fmt = _infer_format(path, fmt)
    if fmt == "bin":
        chunks = [rec for _, rec in _iter_binary_chunks(path)]
        if not chunks:
            return Trace(np.empty(0, np.uint64), np.empty(0, np.int64))
        rec = np.concatenate(chunks)
        if rec["value"].size and rec["value"].max() > np.iinfo(np.int64).max:
            raise TraceFormatError("value does not fit in a signed 64-bit counter")
        return Trace(rec["key"], rec["value"].astype(np.int64))
    return Trace.from_records(load_trace(path, fmt))


def exact_counts(keys, values=None) -> tuple[np.ndarray, np.ndarray]:
    """Distinct keys (sorted) and their exact value sums."""
    keys = np.asarray(keys, dtype=np.uint64)
    uniq, inv = np.unique(keys, return_inverse=True)
    if values is None:
        sums = np.bincount(inv, minlength=uniq.shape[0]).astype(np.int64)
    else:
        sums = np.zeros(uniq.shape[0], dtype=np.int64)
        np.add.at(sums, inv, np.asarray(values, dtype=np.int64))
    return uniq, sums


def exact_oracle(trace: Union[Trace, Iterable]) -> dict[int, int]:
    """Ground-truth key -> value sum map."""
    if isinstance(trace, Trace):
        uniq, sums = exact_counts(trace.keys, trace.values)
        return dict(zip(uniq.tolist(), sums.tolist()))
    out: dict[int, int] = {}
    for r in trace:
        k, v = (r if isinstance(r, tuple) else (r, 1))
        out[k] = out.get(k, 0) + v
    return out
