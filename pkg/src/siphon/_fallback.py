"""Numpy implementations of the hot kernels.

These are the reference versions; ``_ckernels.pyx`` must agree with them
bit for bit. Keys are fixed-width big-endian byte strings packed into
``uint64`` (width 1..8 bytes), so integer order equals byte order.
"""
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
PROBE_SALT = np.uint64(0xD6E8FEB86659FD93)


def mix64(x):
    x = np.asarray(x, dtype=np.uint64)
    z = x + GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def hash_keys(keys, width, seed):
    keys = np.asarray(keys, dtype=np.uint64)
    salt = np.uint64((int(seed) ^ (width * int(GOLDEN))) & 0xFFFFFFFFFFFFFFFF)
    return mix64(keys ^ salt)


def _probe_positions(hashes, nbits, nprobes):
    h2 = mix64(hashes ^ PROBE_SALT) | np.uint64(1)
    steps = np.arange(nprobes, dtype=np.uint64)
    return (hashes[:, None] + steps[None, :] * h2[:, None]) % np.uint64(nbits)


def bloom_insert(bits, nbits, hashes, nprobes):
    hashes = np.asarray(hashes, dtype=np.uint64)
    if hashes.size == 0:
        return
    pos = _probe_positions(hashes, nbits, nprobes).ravel()
    np.bitwise_or.at(bits, (pos >> np.uint64(3)).astype(np.intp),
                     (np.uint8(1) << (pos & np.uint64(7)).astype(np.uint8)))


def bloom_query(bits, nbits, hashes, nprobes):
    hashes = np.asarray(hashes, dtype=np.uint64)
    if hashes.size == 0:
        return np.zeros(0, dtype=bool)
    pos = _probe_positions(hashes, nbits, nprobes)
    byte = bits[(pos >> np.uint64(3)).astype(np.intp)]
    hit = (byte >> (pos & np.uint64(7)).astype(np.uint8)) & np.uint8(1)
    return hit.all(axis=1)


def lcp_bytes(a, b, width):
    """Length in bytes of the common prefix of packed keys ``a`` and ``b``."""
    x = np.asarray(a, dtype=np.uint64) ^ np.asarray(b, dtype=np.uint64)
    out = np.zeros(x.shape, dtype=np.uint8)
    for k in range(1, width + 1):
        out += ((x >> np.uint64(8 * (width - k))) == 0).astype(np.uint8)
    return out


def neighbor_lcp(keys, width):
    """Per key, the longest common prefix (bytes) with either sorted neighbour."""
    keys = np.asarray(keys, dtype=np.uint64)
    n = keys.size
    out = np.zeros(n, dtype=np.uint8)
    if n < 2:
        return out
    adj = lcp_bytes(keys[:-1], keys[1:], width)
    out[:-1] = adj
    np.maximum(out[1:], adj, out=out[1:])
    return out


def surf_probe(stored, thresh, stored_hash, hash_mask, queries, query_hash, width):
    """Fixed-width SuRF point query.

    A query passes when it shares at least ``thresh[i]`` leading bytes with
    stored key ``i`` (and, when hashes are given, matches its masked hash).
    Only a sorted neighbour of the query can satisfy this.
    """
    queries = np.asarray(queries, dtype=np.uint64)
    n = stored.size
    if n == 0 or queries.size == 0:
        return np.zeros(queries.size, dtype=bool)
    pos = np.searchsorted(stored, queries, side="left")
    result = np.zeros(queries.size, dtype=bool)
    for cand in (np.clip(pos - 1, 0, n - 1), np.clip(pos, 0, n - 1)):
        ok = lcp_bytes(queries, stored[cand], width) >= thresh[cand]
        if stored_hash is not None:
            mask = np.uint64(hash_mask)
            ok &= (query_hash & mask) == (stored_hash[cand] & mask)
        result |= ok
    return result
