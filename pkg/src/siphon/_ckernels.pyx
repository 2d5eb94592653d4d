# cython: language_level=3
"""Compiled versions of the kernels in ``_fallback``; same signatures and results."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint8_t, uint64_t

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t M1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t M2 = 0x94D049BB133111EBULL
cdef uint64_t PROBE_SALT = 0xD6E8FEB86659FD93ULL


cdef inline uint64_t _mix(uint64_t x) nogil:
    cdef uint64_t z = x + GOLDEN
    z = (z ^ (z >> 30)) * M1
    z = (z ^ (z >> 27)) * M2
    return z ^ (z >> 31)


cdef inline uint8_t _lcp(uint64_t a, uint64_t b, int width) nogil:
    cdef uint64_t x = a ^ b
    cdef int k
    cdef uint8_t n = 0
    for k in range(1, width + 1):
        if (x >> (8 * (width - k))) == 0:
            n += 1
        else:
            break
    return n


def mix64(x):
    cdef const uint64_t[:] src = np.ascontiguousarray(np.atleast_1d(x), dtype=np.uint64)
    out = np.empty(src.shape[0], dtype=np.uint64)
    cdef uint64_t[:] dst = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(src.shape[0]):
            dst[i] = _mix(src[i])
    return out if np.ndim(x) else out[0]


def hash_keys(keys, int width, seed):
    cdef const uint64_t[:] src = np.ascontiguousarray(keys, dtype=np.uint64)
    out = np.empty(src.shape[0], dtype=np.uint64)
    cdef uint64_t[:] dst = out
    cdef uint64_t salt = (<uint64_t>int(seed)) ^ (<uint64_t>width * GOLDEN)
    cdef Py_ssize_t i
    with nogil:
        for i in range(src.shape[0]):
            dst[i] = _mix(src[i] ^ salt)
    return out


def bloom_insert(uint8_t[:] bits, uint64_t nbits, hashes, int nprobes):
    cdef const uint64_t[:] h = np.ascontiguousarray(hashes, dtype=np.uint64)
    cdef Py_ssize_t i
    cdef int j
    cdef uint64_t h2, p
    with nogil:
        for i in range(h.shape[0]):
            h2 = _mix(h[i] ^ PROBE_SALT) | 1
            for j in range(nprobes):
                p = (h[i] + <uint64_t>j * h2) % nbits
                bits[p >> 3] |= <uint8_t>(1 << (p & 7))


def bloom_query(const uint8_t[:] bits, uint64_t nbits, hashes, int nprobes):
    cdef const uint64_t[:] h = np.ascontiguousarray(hashes, dtype=np.uint64)
    out = np.empty(h.shape[0], dtype=np.bool_)
    cdef cnp.npy_bool[:] res = out
    cdef Py_ssize_t i
    cdef int j
    cdef uint64_t h2, p
    cdef bint ok
    with nogil:
        for i in range(h.shape[0]):
            h2 = _mix(h[i] ^ PROBE_SALT) | 1
            ok = True
            for j in range(nprobes):
                p = (h[i] + <uint64_t>j * h2) % nbits
                if not (bits[p >> 3] >> (p & 7)) & 1:
                    ok = False
                    break
            res[i] = ok
    return out


def lcp_bytes(a, b, int width):
    cdef const uint64_t[:] x = np.ascontiguousarray(a, dtype=np.uint64)
    cdef const uint64_t[:] y = np.ascontiguousarray(b, dtype=np.uint64)
    out = np.empty(x.shape[0], dtype=np.uint8)
    cdef uint8_t[:] dst = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(x.shape[0]):
            dst[i] = _lcp(x[i], y[i], width)
    return out


def neighbor_lcp(keys, int width):
    cdef const uint64_t[:] k = np.ascontiguousarray(keys, dtype=np.uint64)
    cdef Py_ssize_t n = k.shape[0]
    out = np.zeros(n, dtype=np.uint8)
    cdef uint8_t[:] dst = out
    cdef Py_ssize_t i
    cdef uint8_t c
    with nogil:
        for i in range(n - 1):
            c = _lcp(k[i], k[i + 1], width)
            if c > dst[i]:
                dst[i] = c
            dst[i + 1] = c
    return out


cdef inline Py_ssize_t _lower_bound(const uint64_t[:] a, uint64_t v) nogil:
    cdef Py_ssize_t lo = 0, hi = a.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef inline bint _accepts(const uint64_t[:] s, const uint8_t[:] t, const uint64_t[:] sh,
                          const uint64_t[:] qh, uint64_t mask, bint use_hash, uint64_t q,
                          Py_ssize_t i, Py_ssize_t c, int width) nogil:
    if _lcp(q, s[c], width) < t[c]:
        return False
    return not use_hash or (qh[i] & mask) == (sh[c] & mask)


def surf_probe(stored, thresh, stored_hash, hash_mask, queries, query_hash, int width):
    cdef const uint64_t[:] s = np.ascontiguousarray(stored, dtype=np.uint64)
    cdef const uint8_t[:] t = np.ascontiguousarray(thresh, dtype=np.uint8)
    cdef const uint64_t[:] q = np.ascontiguousarray(queries, dtype=np.uint64)
    cdef bint use_hash = stored_hash is not None
    cdef const uint64_t[:] sh = np.ascontiguousarray(
        stored_hash if use_hash else np.zeros(1), dtype=np.uint64)
    cdef const uint64_t[:] qh = np.ascontiguousarray(
        query_hash if use_hash else np.zeros(1), dtype=np.uint64)
    cdef uint64_t mask = <uint64_t>int(hash_mask)
    cdef Py_ssize_t n = s.shape[0]
    out = np.zeros(q.shape[0], dtype=np.bool_)
    cdef cnp.npy_bool[:] res = out
    cdef Py_ssize_t i, pos, c, lo, hi
    if n == 0:
        return out
    with nogil:
        for i in range(q.shape[0]):
            pos = _lower_bound(s, q[i])
            lo = pos - 1 if pos > 0 else 0
            hi = pos if pos < n else n - 1
            if _accepts(s, t, sh, qh, mask, use_hash, q[i], i, lo, width) or \
                    _accepts(s, t, sh, qh, mask, use_hash, q[i], i, hi, width):
                res[i] = True
    return out
