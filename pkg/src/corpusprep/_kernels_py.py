"""Pure-Python/numpy fallback for the compiled kernels in ``_kernels.pyx``.

Both backends work modulo the Mersenne prime 2**61 - 1 and split 64-bit
products into 32-bit halves, so they agree bit-for-bit.
"""
import numpy as np

P61 = np.uint64((1 << 61) - 1)
_M32 = np.uint64(0xFFFFFFFF)
_M29 = np.uint64((1 << 29) - 1)
_S29, _S32, _S61 = np.uint64(29), np.uint64(32), np.uint64(61)
_EIGHT = np.uint64(8)

# Bounds the (k x shingles) intermediate to a few MB per chunk.
_CHUNK = 4096


def _reduce(r):
    r = (r & P61) + (r >> _S61)
    return np.where(r >= P61, r - P61, r)


def _mulmod(a, x):
    a_hi, a_lo = a >> _S32, a & _M32
    x_hi, x_lo = x >> _S32, x & _M32
    hh = a_hi * x_hi
    mid = a_hi * x_lo + a_lo * x_hi
    ll = a_lo * x_lo
    r = hh * _EIGHT
    r = r + (mid >> _S29) + ((mid & _M29) << _S32)
    r = r + (ll & P61) + (ll >> _S61)
    return _reduce(r)


def minhash_batch(hashes, offsets, a, b):
    hashes = np.asarray(hashes, dtype=np.uint64)
    a = np.asarray(a, dtype=np.uint64)[:, None]
    b = np.asarray(b, dtype=np.uint64)[:, None]
    n_docs = len(offsets) - 1
    out = np.full((n_docs, a.shape[0]), P61, dtype=np.uint64)
    with np.errstate(over="ignore"):
        for d in range(n_docs):
            lo, hi = int(offsets[d]), int(offsets[d + 1])
            for start in range(lo, hi, _CHUNK):
                x = _reduce(hashes[start : min(hi, start + _CHUNK)])[None, :]
                vals = _reduce(_mulmod(a, x) + b)
                np.minimum(out[d], vals.min(axis=1), out=out[d])
    return out


def mulmod61(a, x):
    """``(a * x) mod (2**61 - 1)`` for non-negative integers below 2**64."""
    with np.errstate(over="ignore"):
        return int(_mulmod(_reduce(np.uint64(a)), _reduce(np.uint64(x))))


def bpe_merge(ids, ranks):
    """Apply the lowest-ranked merge repeatedly until none applies.

    ``ranks`` maps ``(left << 32) | right`` to ``(rank << 32) | merged_id``.
    """
    ids = list(ids)
    while len(ids) > 1:
        best = None
        best_key = None
        for left, right in zip(ids, ids[1:]):
            key = (left << 32) | right
            val = ranks.get(key)
            if val is not None and (best is None or val < best):
                best, best_key = val, key
        if best is None:
            break
        left, right, merged = best_key >> 32, best_key & 0xFFFFFFFF, best & 0xFFFFFFFF
        out = []
        i, n = 0, len(ids)
        while i < n:
            if i < n - 1 and ids[i] == left and ids[i + 1] == right:
                out.append(merged)
                i += 2
            else:
                out.append(ids[i])
                i += 1
        ids = out
    return ids
