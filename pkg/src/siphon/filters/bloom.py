"""Bloom filter and prefix Bloom filter (PBF)."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .. import kernels
from ..keyspace import key_hash, pack


def optimal_probes(bits_per_item: float) -> int:
    return max(1, round(bits_per_item * math.log(2)))


def hash_bytes_keys(keys: Sequence[bytes], seed: int) -> np.ndarray:
    """Hashes of arbitrary-length keys, vectorised for keys of <= 8 bytes."""
    out = np.empty(len(keys), dtype=np.uint64)
    by_len: dict[int, list[int]] = {}
    for i, k in enumerate(keys):
        by_len.setdefault(len(k), []).append(i)
    for length, idx in by_len.items():
        if 1 <= length <= 8:
            packed = np.fromiter((pack(keys[i]) for i in idx), dtype=np.uint64, count=len(idx))
            out[idx] = kernels.hash_keys(packed, length, seed)
        else:
            out[idx] = [key_hash(keys[i], seed) for i in idx]
    return out


class BloomFilter:
    """``nbits``-bit array probed by ``nprobes`` double-hashed positions."""

    kind = "bloom"

    def __init__(self, nbits: int, nprobes: int, seed: int = 0):
        if nbits < 8 or nprobes < 1:
            raise ValueError("need nbits >= 8 and nprobes >= 1")
        self.nbits = int(nbits)
        self.nprobes = int(nprobes)
        self.seed = int(seed)
        self.bits = np.zeros((self.nbits + 7) // 8, dtype=np.uint8)
        self.n_items = 0

    @classmethod
    def for_capacity(cls, n_items: int, bits_per_item: float, seed: int = 0) -> "BloomFilter":
        return cls(max(64, math.ceil(bits_per_item * n_items)), optimal_probes(bits_per_item), seed)

    def add_hashes(self, hashes: np.ndarray) -> None:
        kernels.bloom_insert(self.bits, np.uint64(self.nbits), hashes, self.nprobes)
        self.n_items += len(hashes)

    def add(self, key: bytes) -> None:
        self.add_hashes(hash_bytes_keys([key], self.seed))

    def add_many(self, keys: Sequence[bytes]) -> None:
        self.add_hashes(hash_bytes_keys(keys, self.seed))

    def query_hashes(self, hashes: np.ndarray) -> np.ndarray:
        return kernels.bloom_query(self.bits, np.uint64(self.nbits), hashes, self.nprobes)

    def contains(self, key: bytes) -> bool:
        return bool(self.query_hashes(hash_bytes_keys([key], self.seed))[0])

    def contains_many(self, packed: np.ndarray, width: int) -> np.ndarray:
        return self.query_hashes(kernels.hash_keys(packed, width, self.seed))

    def fill_ratio(self) -> float:
        return float(np.unpackbits(self.bits)[: self.nbits].mean())

    def size_bits(self) -> int:
        return self.nbits

    def expected_fpr(self) -> float:
        """Standard estimate (1 - e^{-j n / m})^j for the current item count."""
        return (1.0 - math.exp(-self.nprobes * self.n_items / self.nbits)) ** self.nprobes

    def params(self) -> dict:
        return {"nbits": self.nbits, "nprobes": self.nprobes, "seed": self.seed,
                "items": self.n_items}


class PrefixBloomFilter:
    """Bloom filter holding every key and its ``prefix_len_bits`` prefix."""

    kind = "pbf"

    def __init__(self, bloom: BloomFilter, prefix_len_bits: int):
        if prefix_len_bits <= 0 or prefix_len_bits % 8:
            raise ValueError("prefix length must be a positive multiple of 8 bits")
        self.bloom = bloom
        self.prefix_len_bits = prefix_len_bits

    @property
    def prefix_len_bytes(self) -> int:
        return self.prefix_len_bits // 8

    @classmethod
    def from_keys(cls, keys: Sequence[bytes], prefix_len_bits: int,
                  bits_per_key: float, seed: int = 0) -> "PrefixBloomFilter":
        plen = prefix_len_bits // 8
        prefixes = sorted({k[:plen] for k in keys if len(k) > plen})
        items = len(keys) + len(prefixes)
        # bits_per_key budgets the dataset key count; the probe count follows
        # the bits actually available per inserted item
        nbits = max(64, math.ceil(bits_per_key * len(keys)))
        bloom = BloomFilter(nbits, optimal_probes(nbits / max(items, 1)), seed)
        bloom.add_many(list(keys))
        bloom.add_many(prefixes)
        out = cls(bloom, prefix_len_bits)
        out.n_prefixes = len(prefixes)
        return out

    def contains(self, key: bytes) -> bool:
        return self.bloom.contains(key)

    def contains_many(self, packed: np.ndarray, width: int) -> np.ndarray:
        return self.bloom.contains_many(packed, width)

    def prefix_query(self, prefix: bytes) -> bool:
        if len(prefix) * 8 != self.prefix_len_bits:
            raise ValueError(
                f"prefix query needs exactly {self.prefix_len_bits} bits, got {len(prefix) * 8}")
        return self.bloom.contains(prefix)

    def size_bits(self) -> int:
        return self.bloom.nbits

    def params(self) -> dict:
        return {**self.bloom.params(), "prefix_len_bits": self.prefix_len_bits,
                "distinct_prefixes": getattr(self, "n_prefixes", None)}
