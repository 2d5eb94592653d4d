"""Keys, datasets and shared-prefix bookkeeping.

Keys are ``bytes``. Fixed-length datasets (up to 8-byte keys) are held as a
sorted ``uint64`` array of big-endian packed keys, which keeps integer order
equal to lexicographic byte order and lets the kernels work on them
directly. Variable-length datasets are held as a sorted tuple of ``bytes``.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from . import kernels

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
SYMBOL_BITS = 8
MAX_KEY_BYTES = 64


class CapacityError(ValueError):
    """Requested more distinct keys than the key space holds."""


def mix64(x: int) -> int:
    """splitmix64 finalizer on a Python int."""
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def key_hash(key: bytes, seed: int = 0) -> int:
    """64-bit public hash of a key.

    For keys of at most 8 bytes this equals ``kernels.hash_keys`` on the
    packed key with ``width=len(key)``.
    """
    h = (seed ^ (len(key) * GOLDEN)) & MASK64
    for i in range(0, max(len(key), 1), 8):
        h = mix64(h ^ int.from_bytes(key[i:i + 8], "big"))
    return h


def pack(key: bytes) -> int:
    if len(key) > 8:
        raise ValueError("only keys of at most 8 bytes can be packed")
    return int.from_bytes(key, "big")


def unpack(value: int, width: int) -> bytes:
    return int(value).to_bytes(width, "big")


def pack_many(keys: Iterable[bytes]) -> np.ndarray:
    return np.fromiter((pack(k) for k in keys), dtype=np.uint64)


def shared_prefix_bytes(a: bytes, b: bytes) -> int:
    n = min(len(a), len(b))
    for i in range(n):
        if a[i] != b[i]:
            return i
    return n


def longest_shared_prefix(a: bytes, b: bytes, granularity: str = "byte") -> int:
    """Common-prefix length of ``a`` and ``b`` in bits.

    With the default byte granularity the result is 8 times the number of
    equal leading bytes, which is what a byte-labelled trie sees. Pass
    ``granularity="bit"`` for the exact bit-level length.
    """
    i = shared_prefix_bytes(a, b)
    if granularity == "byte":
        return 8 * i
    if granularity != "bit":
        raise ValueError(f"unknown granularity {granularity!r}")
    if i == min(len(a), len(b)):
        return 8 * i
    return 8 * i + (8 - (a[i] ^ b[i]).bit_length())


class Dataset:
    """A sorted, duplicate-free key set.

    Build one with :func:`generate_uniform`, :meth:`from_keys` or
    :func:`load_dataset`.
    """

    def __init__(self, packed: np.ndarray | None = None, key_len_bits: int | None = None,
                 seed: int | None = None, var_keys: tuple[bytes, ...] | None = None):
        if (packed is None) == (var_keys is None):
            raise ValueError("give exactly one of packed / var_keys")
        if packed is not None:
            if key_len_bits is None or key_len_bits % 8 or not 8 <= key_len_bits <= 64:
                raise ValueError("packed datasets need key_len_bits in 8..64, multiple of 8")
            packed = np.asarray(packed, dtype=np.uint64)
            if packed.size == 0:
                raise ValueError("dataset must not be empty")
            if packed.size > 1 and not np.all(packed[1:] > packed[:-1]):
                raise ValueError("packed keys must be strictly increasing")
            if key_len_bits < 64 and int(packed[-1]) >> key_len_bits:
                raise ValueError("key exceeds key_len_bits")
        else:
            if not var_keys:
                raise ValueError("dataset must not be empty")
            for a, b in zip(var_keys, var_keys[1:]):
                if not a < b:
                    raise ValueError("keys must be strictly increasing")
            for k in var_keys:
                if not 1 <= len(k) <= MAX_KEY_BYTES:
                    raise ValueError("keys must be 1..64 bytes long")
        self.packed = packed
        self.key_len_bits = key_len_bits
        self.seed = seed
        self._var = var_keys

    @classmethod
    def from_keys(cls, keys: Iterable[bytes], seed: int | None = None) -> "Dataset":
        """Sort and deduplicate ``keys``; pack them when they share a length <= 8."""
        uniq = sorted(set(bytes(k) for k in keys))
        lengths = {len(k) for k in uniq}
        if len(lengths) == 1 and 1 <= (w := lengths.pop()) <= 8:
            return cls(packed=pack_many(uniq), key_len_bits=8 * w, seed=seed)
        return cls(var_keys=tuple(uniq), seed=seed)

    @property
    def fixed(self) -> bool:
        return self.packed is not None

    @property
    def width(self) -> int | None:
        """Key length in bytes for fixed-length datasets, else None."""
        return None if self.key_len_bits is None else self.key_len_bits // 8

    def __len__(self) -> int:
        return int(self.packed.size) if self.fixed else len(self._var)

    def __iter__(self) -> Iterator[bytes]:
        if self.fixed:
            w = self.width
            for v in self.packed.tolist():
                yield v.to_bytes(w, "big")
        else:
            yield from self._var

    def key(self, i: int) -> bytes:
        if self.fixed:
            return unpack(int(self.packed[i]), self.width)
        return self._var[i]

    @property
    def keys(self) -> list[bytes]:
        return list(self)

    def __contains__(self, key: bytes) -> bool:
        if self.fixed:
            if len(key) != self.width:
                return False
            v = np.uint64(pack(key))
            i = int(np.searchsorted(self.packed, v))
            return i < self.packed.size and self.packed[i] == v
        import bisect
        i = bisect.bisect_left(self._var, key)
        return i < len(self._var) and self._var[i] == key

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        if self.fixed != other.fixed or self.key_len_bits != other.key_len_bits:
            return False
        if self.fixed:
            return np.array_equal(self.packed, other.packed)
        return self._var == other._var

    def __repr__(self):
        kind = f"m={self.key_len_bits}" if self.fixed else "variable"
        return f"Dataset(n={len(self)}, {kind}, seed={self.seed})"


def prf_stream(seed: int, start: int, count: int) -> np.ndarray:
    """``count`` pseudo-random 64-bit words from a seeded counter-mode mix."""
    base = np.uint64(mix64(seed & MASK64))
    ctr = np.arange(start, start + count, dtype=np.uint64)
    return kernels.mix64(ctr * np.uint64(GOLDEN) + base)


def generate_uniform(n: int, m: int, seed: int) -> Dataset:
    """``n`` distinct uniformly random ``m``-bit keys, deterministic in ``seed``.

    Keys are the first ``n`` distinct values of a seeded PRF stream
    truncated to ``m`` bits (rejection of repeats).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if m % 8 or not 8 <= m <= 64:
        raise ValueError("m must be a multiple of 8 in 8..64")
    if n > 1 << m:
        raise CapacityError(f"cannot draw {n} distinct keys from a {m}-bit space")
    shift = np.uint64(64 - m)
    drawn = np.empty(0, dtype=np.uint64)
    chunk = n + 1024
    start = 0
    while True:
        drawn = np.concatenate([drawn, prf_stream(seed, start, chunk) >> shift])
        start += chunk
        uniq, first = np.unique(drawn, return_index=True)
        if uniq.size >= n:
            keep = np.sort(first)[:n]
            return Dataset(packed=np.sort(drawn[keep]), key_len_bits=m, seed=seed)
        chunk = max(chunk, 4 * (n - uniq.size) + 1024)


@dataclass(frozen=True)
class PrefixInfo:
    key: bytes
    max_shared_len_bits: int
    unique_prefix_len_bits: int


def prefix_lengths(d: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Per key (sorted order): longest shared prefix with another key and the
    shortest uniquely identifying prefix, both in bytes."""
    if d.fixed:
        shared = kernels.neighbor_lcp(d.packed, d.width).astype(np.int64)
        lengths = np.full(len(d), d.width, dtype=np.int64)
    else:
        keys = d._var
        shared = np.zeros(len(keys), dtype=np.int64)
        for i in range(len(keys) - 1):
            c = shared_prefix_bytes(keys[i], keys[i + 1])
            shared[i] = max(shared[i], c)
            shared[i + 1] = c
        lengths = np.fromiter((len(k) for k in keys), dtype=np.int64, count=len(keys))
    unique = np.minimum(shared + 1, lengths)
    return shared, unique


def prefix_table(d: Dataset) -> list[PrefixInfo]:
    shared, unique = prefix_lengths(d)
    return [PrefixInfo(k, 8 * int(s), 8 * int(u))
            for k, s, u in zip(d, shared.tolist(), unique.tolist())]


def save_dataset(d: Dataset, path: str | Path) -> None:
    """Write ``m_bits,n,seed`` then one hex key per line."""
    m = "" if d.key_len_bits is None else str(d.key_len_bits)
    seed = "" if d.seed is None else str(d.seed)
    with open(path, "w") as fh:
        fh.write(f"{m},{len(d)},{seed}\n")
        for k in d:
            fh.write(k.hex())
            fh.write("\n")


def load_dataset(path: str | Path) -> Dataset:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if len(header) != 3:
            raise ValueError(f"bad dataset header in {path}")
        m, n, seed = header
        keys = [bytes.fromhex(line.strip()) for line in fh if line.strip()]
    if len(keys) != int(n):
        raise ValueError(f"{path}: header says {n} keys, found {len(keys)}")
    seed_v = int(seed) if seed else None
    if m:
        w = int(m) // 8
        if any(len(k) != w for k in keys):
            raise ValueError(f"{path}: key length does not match m={m}")
        return Dataset(packed=pack_many(keys), key_len_bits=int(m), seed=seed_v)
    return Dataset(var_keys=tuple(keys), seed=seed_v)
