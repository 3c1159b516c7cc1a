"""Compiled inner loops.

Buckets of all layers live in three flat arrays (``fps``, ``yes``, ``no``);
layer ``l`` occupies ``offsets[l]:offsets[l] + widths[l]``. A bucket is empty
iff ``yes == 0`` (every completed insert leaves ``yes >= 1``).
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .hashing import bucket_index, seeded_hash

OK = 0
YES_OVERFLOW = 1


@njit(cache=True, inline="always")
def _fingerprint(key, fp_seed, fp_mask, fp_identity):
    if fp_identity:
        return key
    return seeded_hash(fp_seed, key) & fp_mask


@njit(cache=True)
def sketch_insert_batch(
    keys, values,
    fps, yes, no, offsets, widths, lambdas, seeds,
    has_filter, filt, fseeds, fcap,
    fp_seed, fp_mask, fp_identity, yes_max,
    landed, residual,
):
    """Insert ``keys[t], values[t]`` in order.

    ``landed[t]`` receives the 1-based layer that finished the item (the filter
    counts as layer 1; ``n_layers + 1`` means value was left over), and
    ``residual[t]`` the value that survived the last layer.
    Returns ``(status, n_done, layer_probes, filter_probes)``.
    """
    n_layers = widths.shape[0]
    base = 1 if has_filter else 0
    fw = filt.shape[1]
    layer_probes = 0
    filter_probes = 0
    for t in range(keys.shape[0]):
        key = keys[t]
        v = values[t]
        residual[t] = 0
        if has_filter:
            filter_probes += 2
            i1 = bucket_index(fseeds[0], key, fw)
            i2 = bucket_index(fseeds[1], key, fw)
            c1 = filt[0, i1]
            c2 = filt[1, i2]
            m = c1 if c1 < c2 else c2
            absorbed = fcap - m
            if v < absorbed:
                absorbed = v
            if absorbed > 0:
                target = m + absorbed
                if c1 < target:
                    filt[0, i1] = target
                if c2 < target:
                    filt[1, i2] = target
                v -= absorbed
            if v == 0:
                landed[t] = 1
                continue
        fp = _fingerprint(key, fp_seed, fp_mask, fp_identity)
        done = False
        for l in range(n_layers):
            layer_probes += 1
            j = offsets[l] + bucket_index(seeds[l], key, widths[l])
            lam = lambdas[l]
            y = yes[j]
            if y > 0 and fps[j] == fp:
                if y + v > yes_max:
                    return YES_OVERFLOW, t, layer_probes, filter_probes
                yes[j] = y + v
                landed[t] = base + l + 1
                done = True
                break
            nn = no[j]
            if nn + v > lam and y > lam:
                # lock: absorb up to the threshold, carry the excess down
                v -= lam - nn
                no[j] = lam
                continue
            nn += v
            if nn >= y:
                if nn > yes_max:
                    return YES_OVERFLOW, t, layer_probes, filter_probes
                fps[j] = fp
                no[j] = y
                yes[j] = nn
            else:
                no[j] = nn
            landed[t] = base + l + 1
            done = True
            break
        if not done:
            residual[t] = v
            landed[t] = base + n_layers + 1
    return OK, keys.shape[0], layer_probes, filter_probes


@njit(cache=True)
def sketch_query_batch(
    keys,
    fps, yes, no, offsets, widths, lambdas, seeds,
    has_filter, filt, fseeds, fcap,
    fp_seed, fp_mask, fp_identity,
    upper, mpe, reached_end, recorded,
):
    n_layers = widths.shape[0]
    fw = filt.shape[1]
    for t in range(keys.shape[0]):
        key = keys[t]
        up = 0
        err = 0
        rec = False
        stopped = False
        if has_filter:
            c1 = filt[0, bucket_index(fseeds[0], key, fw)]
            c2 = filt[1, bucket_index(fseeds[1], key, fw)]
            m = c1 if c1 < c2 else c2
            up += m
            err += m
            if m < fcap:
                stopped = True
        if not stopped:
            fp = _fingerprint(key, fp_seed, fp_mask, fp_identity)
            for l in range(n_layers):
                j = offsets[l] + bucket_index(seeds[l], key, widths[l])
                y = yes[j]
                nn = no[j]
                match = y > 0 and fps[j] == fp
                if match:
                    up += y
                    rec = True
                else:
                    up += nn
                err += nn
                if nn < lambdas[l] or y == nn or match:
                    stopped = True
                    break
        upper[t] = up
        mpe[t] = err
        reached_end[t] = not stopped
        recorded[t] = rec


@njit(cache=True)
def matrix_insert_batch(keys, values, counters, seeds, conservative):
    rows = counters.shape[0]
    width = counters.shape[1]
    idx = np.empty(rows, dtype=np.int64)
    for t in range(keys.shape[0]):
        key = keys[t]
        v = values[t]
        if conservative:
            m = np.iinfo(np.int64).max
            for r in range(rows):
                idx[r] = bucket_index(seeds[r], key, width)
                c = counters[r, idx[r]]
                if c < m:
                    m = c
            target = m + v
            for r in range(rows):
                if counters[r, idx[r]] < target:
                    counters[r, idx[r]] = target
        else:
            for r in range(rows):
                counters[r, bucket_index(seeds[r], key, width)] += v


@njit(cache=True)
def matrix_query_batch(keys, counters, seeds, out):
    rows = counters.shape[0]
    width = counters.shape[1]
    for t in range(keys.shape[0]):
        key = keys[t]
        m = np.iinfo(np.int64).max
        for r in range(rows):
            c = counters[r, bucket_index(seeds[r], key, width)]
            if c < m:
                m = c
        out[t] = m
