"""ReliableSketch: layered error-sensible buckets with certified intervals.

Every query returns ``[lower, upper]`` that is guaranteed to contain the
key's true value sum, plus the width of that interval (the maximum possible
error). With the recommended sizing the width stays below ``lambda_cap`` for
every key with overwhelming probability.

Layers shrink geometrically in both width and lock threshold. A bucket in
layer ``i`` whose NO counter would pass ``lambda_i`` is locked: it keeps only
its candidate and pushes everyone else's excess value to layer ``i + 1``.
Value that falls off the last layer goes to a small SpaceSaving stash, or
taints the sketch if there is none.
"""

from __future__ import annotations

import struct
from dataclasses import asdict, dataclass
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from . import _kernels
from .bucket import CounterOverflowError
from .hashing import MASK64, as_key, derive_seed
from .mice_filter import MiceFilter
from .params import derive_lambda, derive_W, layer_thresholds, layer_width
from .stash import SpaceSavingStash

FIELD_WIDTHS = (8, 16, 32, 64)
FILTER_WIDTHS = (8, 16, 32)
FINGERPRINT_TAG = 0xF9_0000
STASH_ENTRY_FIELDS = 3


class SnapshotError(ValueError):
    pass


class ConfigMismatchError(SnapshotError):
    pass


class DisjointIntervalsError(ValueError):
    """Intervals have an empty intersection: the true values cannot be equal."""

    def __init__(self, lower: int, upper: int):
        super().__init__(f"intervals are disjoint (max lower {lower} > min upper {upper})")
        self.lower = lower
        self.upper = upper


@dataclass(frozen=True)
class SketchConfig:
    """Tuning knobs. Give exactly one of ``total_buckets`` or ``memory_bytes``.

    ``lambda_cap`` may be omitted when ``n_hint`` is given; it is then
    derived from the bucket budget. ``mice_filter_fraction=0`` disables the
    filter and ``stash_capacity=0`` disables the stash.
    """

    total_buckets: Optional[int] = None
    memory_bytes: Optional[int] = None
    r_w: float = 2.0
    r_lambda: float = 2.5
    lambda_cap: Optional[int] = None
    depth: int = 7
    n_hint: Optional[int] = None
    seed: int = 0
    yes_bits: int = 32
    no_bits: int = 16
    id_bits: int = 32
    filter_bits: int = 8
    mice_filter_fraction: float = 0.2
    stash_capacity: int = 64

    def __post_init__(self):
        if (self.total_buckets is None) == (self.memory_bytes is None):
            raise ValueError("give exactly one of total_buckets or memory_bytes")
        if self.total_buckets is not None and self.total_buckets < 1:
            raise ValueError("total_buckets must be positive")
        if self.memory_bytes is not None and self.memory_bytes < 1:
            raise ValueError("memory_bytes must be positive")
        if not self.r_w > 1 or not self.r_lambda > 1:
            raise ValueError("r_w and r_lambda must be > 1")
        if self.lambda_cap is None and self.n_hint is None:
            raise ValueError("lambda_cap is required unless n_hint is given")
        if self.lambda_cap is not None and self.lambda_cap < 1:
            raise ValueError("lambda_cap must be positive")
        if self.n_hint is not None and self.n_hint < 1:
            raise ValueError("n_hint must be positive")
        if not 1 <= self.depth <= 64:
            raise ValueError("depth must be in [1, 64]")
        if not 0 <= self.seed <= MASK64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        for name in ("yes_bits", "no_bits", "id_bits"):
            if getattr(self, name) not in FIELD_WIDTHS:
                raise ValueError(f"{name} must be one of {FIELD_WIDTHS}")
        if self.filter_bits not in FILTER_WIDTHS:
            raise ValueError(f"filter_bits must be one of {FILTER_WIDTHS}")
        if not 0 <= self.mice_filter_fraction < 1:
            raise ValueError("mice_filter_fraction must be in [0, 1)")
        if self.stash_capacity < 0:
            raise ValueError("stash_capacity must be non-negative")

    @classmethod
    def recommended(cls, lambda_cap: int, n_hint: int, r_w=2.0, r_lambda=2.5, **kw) -> "SketchConfig":
        """Size the sketch with the recommended bucket count for ``lambda_cap``."""
        w = derive_W(lambda_cap, n_hint, r_w, r_lambda)
        return cls(total_buckets=w, lambda_cap=lambda_cap, n_hint=n_hint, r_w=r_w, r_lambda=r_lambda, **kw)

    @property
    def bucket_bytes(self) -> float:
        return (self.id_bits + self.yes_bits + self.no_bits) / 8

    @property
    def stash_entry_bytes(self) -> float:
        return (self.id_bits + 2 * self.yes_bits) / 8

    def layout(self) -> "Layout":
        return Layout.resolve(self)


@dataclass(frozen=True)
class Layout:
    """Concrete sizes derived from a :class:`SketchConfig`."""

    lambda_cap: int
    thresholds: tuple[int, ...]          # lambda_1.. for all retained layers
    bucket_widths: tuple[int, ...]       # widths of the bucket layers only
    bucket_thresholds: tuple[int, ...]
    filter_width: int                    # counters per filter row (0 = no filter)
    bucket_budget: int                   # buckets available to the bucket layers
    memory_bytes: int                    # nominal footprint, stash included

    @property
    def has_filter(self) -> bool:
        return self.filter_width > 0

    @property
    def depth(self) -> int:
        return len(self.thresholds)

    @property
    def first_bucket_layer(self) -> int:
        return 2 if self.has_filter else 1

    @classmethod
    def resolve(cls, cfg: SketchConfig) -> "Layout":
        bb = cfg.bucket_bytes
        stash_bytes = int(cfg.stash_capacity * cfg.stash_entry_bytes)
        if cfg.total_buckets is not None:
            equiv = cfg.total_buckets
            budget = cfg.total_buckets * bb
        else:
            budget = cfg.memory_bytes - stash_bytes
            if budget < bb:
                raise ValueError(f"memory_bytes={cfg.memory_bytes} leaves no room for buckets")
            equiv = int(budget // bb)

        lam = cfg.lambda_cap if cfg.lambda_cap is not None else derive_lambda(equiv, cfg.n_hint, cfg.r_w, cfg.r_lambda)
        thresholds = tuple(layer_thresholds(lam, cfg.r_lambda, cfg.depth))
        if not thresholds:
            raise ValueError(f"lambda_cap={lam} gives lambda_1 = 0 with r_lambda={cfg.r_lambda}")
        if thresholds[0] > (1 << cfg.no_bits) - 1:
            raise ValueError(f"lambda_1={thresholds[0]} does not fit in {cfg.no_bits}-bit NO counters")

        filter_width = 0
        filter_bytes = 0
        if cfg.mice_filter_fraction > 0:
            if len(thresholds) < 2:
                raise ValueError("the mice filter needs at least two non-zero layer thresholds")
            if thresholds[0] > (1 << cfg.filter_bits) - 1:
                raise ValueError(f"lambda_1={thresholds[0]} does not fit in {cfg.filter_bits}-bit filter counters")
            filter_bytes = int(cfg.mice_filter_fraction * budget)
            filter_width = (filter_bytes * 8 // cfg.filter_bits) // 2
            if filter_width < 1:
                raise ValueError("memory budget too small for the mice filter")
        bucket_budget = int((budget - filter_bytes) // bb)
        if bucket_budget < 1:
            raise ValueError("memory budget too small for any bucket")

        bucket_thresholds = thresholds[1:] if filter_width else thresholds
        widths = tuple(layer_width(bucket_budget, cfg.r_w, k) for k in range(1, len(bucket_thresholds) + 1))
        nominal = int(sum(widths) * bb) + 2 * filter_width * cfg.filter_bits // 8 + stash_bytes
        return cls(lam, thresholds, widths, tuple(bucket_thresholds), filter_width, bucket_budget, nominal)


@dataclass(frozen=True)
class EstimateInterval:
    upper: int
    lower: int
    mpe: int
    stash_consulted: bool = False
    overflow_tainted: bool = False

    @classmethod
    def from_upper(cls, upper: int, mpe: int, stash_consulted=False, overflow_tainted=False) -> "EstimateInterval":
        return cls(int(upper), max(0, int(upper) - int(mpe)), int(mpe), bool(stash_consulted), bool(overflow_tainted))

    def __contains__(self, value: int) -> bool:
        return self.lower <= value <= self.upper


def merge_intervals(intervals: Sequence[EstimateInterval]) -> EstimateInterval:
    """Intersect intervals reported for the same key by several sketches.

    Raises :class:`DisjointIntervalsError` when the intersection is empty,
    which certifies the true values differ between the measurements.
    """
    if not intervals:
        raise ValueError("need at least one interval")
    if any(iv.overflow_tainted for iv in intervals):
        raise ValueError("cannot merge tainted intervals")
    upper = min(iv.upper for iv in intervals)
    lower = max(iv.lower for iv in intervals)
    if lower > upper:
        raise DisjointIntervalsError(lower, upper)
    return EstimateInterval(upper, lower, upper - lower, any(iv.stash_consulted for iv in intervals), False)


class InsertOutcome(NamedTuple):
    kind: str            # "layer", "stash" or "overflow"
    layer: Optional[int]  # 1-based layer that finished the item; the filter is layer 1


@dataclass
class SketchStats:
    items: int = 0
    value: int = 0
    layer_probes: int = 0
    filter_probes: int = 0
    stash_items: int = 0
    overflow_items: int = 0

    @property
    def layers_per_insert(self) -> float:
        return self.layer_probes / self.items if self.items else 0.0

    @property
    def hashes_per_insert(self) -> float:
        return (self.layer_probes + self.filter_probes) / self.items if self.items else 0.0


class ReliableSketch:
    def __init__(self, config: SketchConfig):
        self.config = config
        self.layout = lay = config.layout()
        n = len(lay.bucket_widths)
        self.widths = np.array(lay.bucket_widths, dtype=np.int64)
        self.offsets = np.zeros(n + 1, dtype=np.int64)
        self.offsets[1:] = np.cumsum(self.widths)
        self.lambdas = np.array(lay.bucket_thresholds, dtype=np.int64)
        first = lay.first_bucket_layer
        self.seeds = np.array([derive_seed(config.seed, first + l) for l in range(n)], dtype=np.uint64)
        total = int(self.offsets[-1])
        self.fps = np.zeros(total, dtype=np.uint64)
        self.yes = np.zeros(total, dtype=np.int64)
        self.no = np.zeros(total, dtype=np.int64)

        if lay.has_filter:
            self.filter: Optional[MiceFilter] = MiceFilter(lay.filter_width, lay.thresholds[0], config.seed, config.filter_bits)
            self._filt = self.filter.counters
            self._fseeds = np.array(self.filter.seeds, dtype=np.uint64)
        else:
            self.filter = None
            self._filt = np.zeros((2, 1), dtype=np.int64)
            self._fseeds = np.zeros(2, dtype=np.uint64)
        self._fcap = np.int64(lay.thresholds[0])

        self.stash = SpaceSavingStash(config.stash_capacity) if config.stash_capacity else None
        self.overflow_flag = False
        self.stats = SketchStats()

        self._fp_identity = config.id_bits == 64
        self._fp_mask = np.uint64((1 << config.id_bits) - 1)
        self._fp_seed = np.uint64(derive_seed(config.seed, FINGERPRINT_TAG))
        self.yes_max = min((1 << config.yes_bits) - 1, np.iinfo(np.int64).max)

    # -- shape ---------------------------------------------------------

    @property
    def lambda_cap(self) -> int:
        return self.layout.lambda_cap

    @property
    def depth(self) -> int:
        """Effective number of layers (filter included), after trimming."""
        return self.layout.depth

    @property
    def thresholds(self) -> tuple[int, ...]:
        return self.layout.thresholds

    def layer_arrays(self, layer: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Views ``(ids, yes, no)`` of bucket layer ``layer`` (1-based, filter counted)."""
        l = layer - self.layout.first_bucket_layer
        if not 0 <= l < len(self.widths):
            raise IndexError(f"layer {layer} is not a bucket layer")
        s = slice(self.offsets[l], self.offsets[l + 1])
        return self.fps[s], self.yes[s], self.no[s]

    def occupancy(self) -> list[int]:
        """Non-empty buckets per bucket layer."""
        return [int(np.count_nonzero(self.layer_arrays(l)[1])) for l in
                range(self.layout.first_bucket_layer, self.depth + 1)]

    # -- insert --------------------------------------------------------

    def _coerce(self, keys, values):
        keys = np.ascontiguousarray(keys, dtype=np.uint64)
        if values is None:
            values = np.ones(keys.shape[0], dtype=np.int64)
        else:
            values = np.ascontiguousarray(values, dtype=np.int64)
            if values.shape != keys.shape:
                raise ValueError("keys and values must have the same length")
            if values.size and values.min() < 1:
                raise ValueError("values must be >= 1")
            if values.size and values.max() > self.yes_max:
                raise ValueError(f"value exceeds the {self.config.yes_bits}-bit YES field")
        return keys, values

    def insert_many(self, keys, values=None) -> np.ndarray:
        """Insert a batch in order; returns the finishing layer of each item."""
        keys, values = self._coerce(keys, values)
        n = keys.shape[0]
        landed = np.zeros(n, dtype=np.int8)
        residual = np.zeros(n, dtype=np.int64)
        status, done, lp, fp = _kernels.sketch_insert_batch(
            keys, values,
            self.fps, self.yes, self.no, self.offsets, self.widths, self.lambdas, self.seeds,
            self.filter is not None, self._filt, self._fseeds, self._fcap,
            self._fp_seed, self._fp_mask, self._fp_identity, np.int64(self.yes_max),
            landed, residual,
        )
        st = self.stats
        st.items += int(done)
        st.value += int(values[:done].sum())
        st.layer_probes += int(lp)
        st.filter_probes += int(fp)
        for t in np.flatnonzero(residual[:done]):
            self._spill(int(keys[t]), int(residual[t]))
        if status == _kernels.YES_OVERFLOW:
            raise CounterOverflowError(
                f"item {done} (key {int(keys[done])}) overflows the {self.config.yes_bits}-bit YES field; "
                "the sketch may hold part of it"
            )
        return landed

    def _spill(self, key: int, value: int) -> str:
        if self.stash is not None:
            self.stash.insert(key, value)
            self.stats.stash_items += 1
            return "stash"
        self.overflow_flag = True
        self.stats.overflow_items += 1
        return "overflow"

    def insert(self, key, value: int = 1) -> InsertOutcome:
        if value < 1:
            raise ValueError(f"value must be >= 1, got {value}")
        stash_before = self.stats.stash_items
        overflow_before = self.stats.overflow_items
        layer = int(self.insert_many(np.array([as_key(key)], dtype=np.uint64), np.array([value]))[0])
        if self.stats.overflow_items > overflow_before:
            return InsertOutcome("overflow", None)
        if self.stats.stash_items > stash_before:
            return InsertOutcome("stash", None)
        return InsertOutcome("layer", layer)

    # -- query ---------------------------------------------------------

    def _query_arrays(self, keys):
        keys = np.ascontiguousarray(keys, dtype=np.uint64)
        n = keys.shape[0]
        upper = np.zeros(n, dtype=np.int64)
        mpe = np.zeros(n, dtype=np.int64)
        reached = np.zeros(n, dtype=np.bool_)
        recorded = np.zeros(n, dtype=np.bool_)
        _kernels.sketch_query_batch(
            keys,
            self.fps, self.yes, self.no, self.offsets, self.widths, self.lambdas, self.seeds,
            self.filter is not None, self._filt, self._fseeds, self._fcap,
            self._fp_seed, self._fp_mask, self._fp_identity,
            upper, mpe, reached, recorded,
        )
        if self.stash is not None:
            for t in np.flatnonzero(reached):
                k = int(keys[t])
                est, err = self.stash.query(k)
                upper[t] += est
                mpe[t] += err
                if k in self.stash:
                    recorded[t] = True
        else:
            reached[:] = False
        return keys, upper, mpe, reached, recorded

    def query_many(self, keys) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Vectorised query: ``(upper, lower, mpe)`` arrays."""
        _, upper, mpe, _, _ = self._query_arrays(keys)
        return upper, np.maximum(upper - mpe, 0), mpe

    def query(self, key) -> EstimateInterval:
        _, upper, mpe, reached, _ = self._query_arrays(np.array([as_key(key)], dtype=np.uint64))
        return EstimateInterval.from_upper(upper[0], mpe[0], reached[0], self.overflow_flag)

    def recorded_mask(self, keys) -> np.ndarray:
        """Which keys are held as a candidate on their query path (or in the stash)."""
        return self._query_arrays(keys)[4]

    def recorded_keys(self, candidates: Optional[Iterable] = None) -> np.ndarray:
        """Keys currently held as a bucket candidate or stash entry.

        Buckets store fingerprints, so without ``candidates`` this needs
        ``id_bits=64`` (the fingerprint is then the key itself).
        """
        if candidates is not None:
            cand = np.unique(np.asarray(list(candidates) if not isinstance(candidates, np.ndarray) else candidates,
                                        dtype=np.uint64))
            return cand[self.recorded_mask(cand)]
        if not self._fp_identity:
            raise ValueError("recorded keys cannot be recovered from fingerprints; pass candidates or use id_bits=64")
        ids = self.fps[self.yes > 0]
        if self.stash is not None and len(self.stash):
            ids = np.concatenate([ids, np.array(self.stash.keys(), dtype=np.uint64)])
        ids = np.unique(ids)
        return ids[self.recorded_mask(ids)]

    # -- snapshot ------------------------------------------------------

    _MAGIC = b"RSK1"
    _VERSION = 1
    _CFG = struct.Struct("<QQddQHQQBBBBdI")
    _HDR = struct.Struct("<4sH")

    def _bucket_dtype(self) -> np.dtype:
        c = self.config
        return np.dtype([("id", f"<u{c.id_bits // 8}"), ("yes", f"<u{c.yes_bits // 8}"), ("no", f"<u{c.no_bits // 8}")])

    @classmethod
    def _pack_config(cls, c: SketchConfig) -> bytes:
        return cls._CFG.pack(
            c.total_buckets or 0, c.memory_bytes or 0, float(c.r_w), float(c.r_lambda),
            c.lambda_cap or 0, c.depth, c.n_hint or 0, c.seed,
            c.yes_bits, c.no_bits, c.id_bits, c.filter_bits,
            float(c.mice_filter_fraction), c.stash_capacity,
        )

    @classmethod
    def _unpack_config(cls, raw: bytes) -> SketchConfig:
        (tb, mem, rw, rl, lam, depth, nh, seed, yb, nb, ib, fb, frac, sc) = cls._CFG.unpack(raw)
        return SketchConfig(
            total_buckets=tb or None, memory_bytes=mem or None, r_w=rw, r_lambda=rl,
            lambda_cap=lam or None, depth=depth, n_hint=nh or None, seed=seed,
            yes_bits=yb, no_bits=nb, id_bits=ib, filter_bits=fb,
            mice_filter_fraction=frac, stash_capacity=sc,
        )

    def snapshot(self) -> bytes:
        """Serialize the full sketch state (runtime statistics excluded)."""
        parts = [self._HDR.pack(self._MAGIC, self._VERSION), self._pack_config(self.config),
                 struct.pack("<B", int(self.overflow_flag))]
        rec = np.zeros(self.fps.shape[0], dtype=self._bucket_dtype())
        rec["id"] = np.where(self.yes > 0, self.fps, 0)
        rec["yes"] = self.yes
        rec["no"] = self.no
        parts.append(rec.tobytes())
        if self.filter is not None:
            parts.append(self.filter.counters.astype(f"<u{self.config.filter_bits // 8}").tobytes())
        entries = list(self.stash.entries()) if self.stash is not None else []
        parts.append(struct.pack("<I", len(entries)))
        if entries:
            parts.append(np.array(entries, dtype="<u8").tobytes())
        return b"".join(parts)

    @classmethod
    def restore(cls, data: bytes, config: Optional[SketchConfig] = None) -> "ReliableSketch":
        """Rebuild a sketch from :meth:`snapshot` bytes.

        When ``config`` is given it must equal the embedded one.
        """
        data = bytes(data)
        pos = cls._HDR.size
        if len(data) < pos:
            raise SnapshotError("truncated header")
        magic, version = cls._HDR.unpack_from(data)
        if magic != cls._MAGIC:
            raise SnapshotError(f"bad magic {magic!r}")
        if version != cls._VERSION:
            raise SnapshotError(f"unsupported snapshot version {version}")
        if len(data) < pos + cls._CFG.size + 1:
            raise SnapshotError("truncated config block")
        try:
            embedded = cls._unpack_config(data[pos:pos + cls._CFG.size])
        except ValueError as exc:
            raise SnapshotError(f"invalid config block: {exc}") from exc
        if config is not None and asdict(config) != asdict(embedded):
            raise ConfigMismatchError("snapshot was taken with a different configuration")
        pos += cls._CFG.size
        try:
            sk = cls(embedded)
        except ValueError as exc:
            raise SnapshotError(f"invalid config block: {exc}") from exc
        sk.overflow_flag = bool(data[pos])
        pos += 1

        dt = sk._bucket_dtype()
        nb = dt.itemsize * sk.fps.shape[0]
        fb = 2 * sk.layout.filter_width * sk.config.filter_bits // 8
        if len(data) < pos + nb + fb + 4:
            raise SnapshotError("truncated payload")
        rec = np.frombuffer(data, dtype=dt, count=sk.fps.shape[0], offset=pos)
        pos += nb
        sk.fps[:] = rec["id"]
        sk.yes[:] = rec["yes"]
        sk.no[:] = rec["no"]
        if sk.filter is not None:
            flat = np.frombuffer(data, dtype=f"<u{sk.config.filter_bits // 8}", count=2 * sk.layout.filter_width, offset=pos)
            sk.filter.counters[:] = flat.reshape(2, -1)
            pos += fb
        (n_entries,) = struct.unpack_from("<I", data, pos)
        pos += 4
        need = n_entries * STASH_ENTRY_FIELDS * 8
        if len(data) != pos + need:
            raise SnapshotError("payload length does not match the configuration")
        if n_entries:
            if sk.stash is None:
                raise SnapshotError("stash entries present but stash is disabled")
            arr = np.frombuffer(data, dtype="<u8", count=n_entries * STASH_ENTRY_FIELDS, offset=pos).reshape(-1, 3)
            sk.stash = SpaceSavingStash.from_entries(sk.config.stash_capacity, arr.tolist())
        sk._validate()
        return sk

    def _validate(self) -> None:
        for l in range(len(self.widths)):
            s = slice(self.offsets[l], self.offsets[l + 1])
            if np.any(self.no[s] > self.lambdas[l]) or np.any(self.yes[s] < self.no[s]):
                raise SnapshotError(f"bucket counters in layer {l + self.layout.first_bucket_layer} violate invariants")
        if self.filter is not None and np.any(self.filter.counters > self.filter.cap):
            raise SnapshotError("filter counters exceed the cap")
