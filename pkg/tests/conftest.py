"""Shared fixtures and a slow pure-Python reference sketch.

The reference re-implements insert/query bucket by bucket with the
:class:`Bucket`, :class:`MiceFilter` and :class:`SpaceSavingStash` classes,
so the compiled kernels can be checked against it state for state.
"""

import numpy as np
import pytest

from reliablesketch.bucket import Bucket
from reliablesketch.hashing import MASK64, derive_seed, hash64
from reliablesketch.mice_filter import MiceFilter
from reliablesketch.sketch import FINGERPRINT_TAG, ReliableSketch
from reliablesketch.stash import SpaceSavingStash


class ReferenceSketch:
    def __init__(self, sketch: ReliableSketch):
        cfg = sketch.config
        lay = sketch.layout
        self.widths = [int(w) for w in sketch.widths]
        self.lambdas = [int(x) for x in sketch.lambdas]
        self.seeds = [int(s) for s in sketch.seeds]
        self.layers = [[Bucket() for _ in range(w)] for w in self.widths]
        self.filter = MiceFilter(lay.filter_width, lay.thresholds[0], cfg.seed, cfg.filter_bits) if lay.has_filter else None
        self.stash = SpaceSavingStash(cfg.stash_capacity) if cfg.stash_capacity else None
        self.overflow = False
        self._fp_seed = derive_seed(cfg.seed, FINGERPRINT_TAG)
        self._fp_bits = cfg.id_bits

    def fp(self, key):
        if self._fp_bits == 64:
            return key
        return hash64(self._fp_seed, key) & ((1 << self._fp_bits) - 1)

    def insert(self, key, v=1):
        if self.filter is not None:
            v = self.filter.insert(key, v)
            if v == 0:
                return
        fp = self.fp(key)
        for l, w in enumerate(self.widths):
            b = self.layers[l][hash64(self.seeds[l], key) % w]
            lam = self.lambdas[l]
            if b.id == fp:
                b.yes += v
                return
            if b.no + v > lam and b.yes > lam:
                v -= lam - b.no
                b.no = lam
                continue
            b.insert(fp, v)
            return
        if self.stash is not None:
            self.stash.insert(key, v)
        else:
            self.overflow = True

    def query(self, key):
        upper = mpe = 0
        if self.filter is not None:
            m, _ = self.filter.query(key)
            upper += m
            mpe += m
            if m < self.filter.cap:
                return upper, mpe
        fp = self.fp(key)
        for l, w in enumerate(self.widths):
            b = self.layers[l][hash64(self.seeds[l], key) % w]
            hit = b.id == fp
            upper += b.yes if hit else b.no
            mpe += b.no
            if b.no < self.lambdas[l] or b.yes == b.no or hit:
                return upper, mpe
        if self.stash is not None:
            est, err = self.stash.query(key)
            upper += est
            mpe += err
        return upper, mpe

    def state(self):
        ids, yes, no = [], [], []
        for layer in self.layers:
            for b in layer:
                ids.append(0 if b.id is None else b.id & MASK64)
                yes.append(b.yes)
                no.append(b.no)
        return np.array(ids, dtype=np.uint64), np.array(yes, dtype=np.int64), np.array(no, dtype=np.int64)


@pytest.fixture
def reference():
    return ReferenceSketch


def true_counts(keys, values=None):
    out = {}
    if values is None:
        values = [1] * len(keys)
    for k, v in zip(keys, values):
        out[k] = out.get(k, 0) + v
    return out


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
