# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. Semantics mirror ``_kernels_py`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef uint64_t P61 = (<uint64_t>1 << 61) - 1
cdef uint64_t M32 = 0xFFFFFFFF
cdef uint64_t M29 = (<uint64_t>1 << 29) - 1


cdef inline uint64_t _reduce(uint64_t r) nogil:
    r = (r & P61) + (r >> 61)
    if r >= P61:
        r -= P61
    return r


cdef inline uint64_t _mulmod(uint64_t a, uint64_t x) nogil:
    cdef uint64_t a_hi = a >> 32, a_lo = a & M32
    cdef uint64_t x_hi = x >> 32, x_lo = x & M32
    cdef uint64_t hh = a_hi * x_hi
    cdef uint64_t mid = a_hi * x_lo + a_lo * x_hi
    cdef uint64_t ll = a_lo * x_lo
    cdef uint64_t r = hh * 8
    r += (mid >> 29) + ((mid & M29) << 32)
    r += (ll & P61) + (ll >> 61)
    return _reduce(r)


def minhash_batch(const uint64_t[::1] hashes, const int64_t[::1] offsets,
                  const uint64_t[::1] a, const uint64_t[::1] b):
    cdef Py_ssize_t n_docs = offsets.shape[0] - 1
    cdef Py_ssize_t k = a.shape[0]
    out = np.empty((n_docs, k), dtype=np.uint64)
    cdef uint64_t[:, ::1] res = out
    cdef Py_ssize_t d, i, j
    cdef uint64_t x, v, best
    with nogil:
        for d in range(n_docs):
            for i in range(k):
                res[d, i] = P61
            for j in range(offsets[d], offsets[d + 1]):
                x = _reduce(hashes[j])
                for i in range(k):
                    v = _reduce(_mulmod(a[i], x) + b[i])
                    if v < res[d, i]:
                        res[d, i] = v
    return out


def mulmod61(a, x):
    """``(a * x) mod (2**61 - 1)`` for non-negative integers below 2**64."""
    return _mulmod(_reduce(<uint64_t>a), _reduce(<uint64_t>x))


def bpe_merge(list ids, dict ranks):
    """Apply the lowest-ranked merge repeatedly until none applies.

    ``ranks`` maps ``(left << 32) | right`` to ``(rank << 32) | merged_id``.
    """
    cdef Py_ssize_t n = len(ids)
    if n < 2:
        return list(ids)
    cdef int64_t* buf = <int64_t*>malloc(n * sizeof(int64_t))
    if buf == NULL:
        raise MemoryError()
    cdef Py_ssize_t i, w
    cdef int64_t key, best_key, packed, best_packed, left, right, merged
    try:
        for i in range(n):
            buf[i] = ids[i]
        while n > 1:
            best_packed = -1
            best_key = -1
            for i in range(n - 1):
                key = (buf[i] << 32) | buf[i + 1]
                val = ranks.get(key)
                if val is not None:
                    packed = val
                    if best_packed < 0 or packed < best_packed:
                        best_packed = packed
                        best_key = key
            if best_packed < 0:
                break
            left = best_key >> 32
            right = best_key & 0xFFFFFFFF
            merged = best_packed & 0xFFFFFFFF
            w = 0
            i = 0
            while i < n:
                if i < n - 1 and buf[i] == left and buf[i + 1] == right:
                    buf[w] = merged
                    i += 2
                else:
                    buf[w] = buf[i]
                    i += 1
                w += 1
            n = w
        return [buf[i] for i in range(n)]
    finally:
        free(buf)
