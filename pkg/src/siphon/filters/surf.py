"""Pruned-trie range filter with Base, Real and Hash variants.

Each stored key contributes its shortest uniquely identifying prefix as a
trie path. Real leaves additionally keep the next ``suffix_bits`` of the key,
Hash leaves keep ``hash_bits`` of a public key hash. The trie is an ordinary
linked structure; for fixed-width datasets a flat sorted-array form is kept
as well and feeds the batched probe kernel.
"""
from __future__ import annotations

import numpy as np

from .. import kernels
from ..keyspace import Dataset, key_hash, prefix_lengths

VARIANTS = ("base", "real", "hash")


class _Node:
    __slots__ = ("children", "terminal", "exact", "suffix", "hbits")

    def __init__(self):
        self.children: dict[int, _Node] = {}
        self.terminal = False
        self.exact = False
        self.suffix = b""
        self.hbits = 0


class SurfTrie:
    """Byte-labelled pruned trie.

    ``terminal`` nodes end a stored prefix. A terminal node with children is
    an internal node that is also a key (non prefix-free key sets).
    """

    def __init__(self, keys, unique_lens, variant: str, suffix_bytes: int,
                 hash_mask: int, hash_seed: int):
        self.variant = variant
        self.suffix_bytes = suffix_bytes
        self.hash_mask = hash_mask
        self.hash_seed = hash_seed
        self.root = _Node()
        self.n_nodes = 1
        self.n_leaves = 0
        for key, u in zip(keys, unique_lens):
            node = self.root
            for b in key[:u]:
                nxt = node.children.get(b)
                if nxt is None:
                    nxt = node.children[b] = _Node()
                    self.n_nodes += 1
                node = nxt
            node.terminal = True
            node.exact = u == len(key)
            if variant == "real":
                node.suffix = key[u:u + suffix_bytes]
            elif variant == "hash":
                node.hbits = key_hash(key, hash_seed) & hash_mask
            self.n_leaves += 1

    def _accept(self, node: _Node, q: bytes, depth: int) -> bool:
        if self.variant == "base":
            return True
        if self.variant == "real":
            s = node.suffix
            return q[depth:depth + len(s)] == s
        return key_hash(q, self.hash_seed) & self.hash_mask == node.hbits

    def contains(self, q: bytes) -> bool:
        node = self.root
        depth = 0
        while True:
            if node.terminal and (depth == len(q) or not node.children):
                return self._accept(node, q, depth)
            if depth == len(q):
                # ran out of query inside the trie at a non-key node
                return False
            node = node.children.get(q[depth])
            if node is None:
                return False
            depth += 1

    def leaf_prefix(self, q: bytes) -> bytes | None:
        """Stored prefix whose node the query's path ends at, if any."""
        node = self.root
        depth = 0
        while True:
            if node.terminal and (depth == len(q) or not node.children):
                return q[:depth]
            if depth == len(q):
                return None
            node = node.children.get(q[depth])
            if node is None:
                return None
            depth += 1

    def _leftmost(self, node: _Node, path: bytes) -> bytes:
        while not node.terminal:
            b = min(node.children)
            node = node.children[b]
            path += bytes([b])
        return path

    def lower_bound(self, lo: bytes) -> bytes | None:
        """Smallest stored prefix whose span reaches ``lo`` or beyond."""
        return self._seek(self.root, lo, 0)

    def _seek(self, node: _Node, lo: bytes, depth: int) -> bytes | None:
        path = lo[:depth]
        if node.terminal and not node.children:
            # leaf: its span covers lo (shared path) or lies above it
            return path
        if depth == len(lo):
            return self._leftmost(node, path)
        b = lo[depth]
        child = node.children.get(b)
        if child is not None:
            found = self._seek(child, lo, depth + 1)
            if found is not None:
                return found
        for c in sorted(x for x in node.children if x > b):
            return self._leftmost(node.children[c], path + bytes([c]))
        return None

    def range_query(self, lo: bytes, hi: bytes) -> bool:
        if lo > hi:
            raise ValueError("range needs lo <= hi")
        found = self.lower_bound(lo)
        return found is not None and found <= hi


class SurfFilter:
    """Range filter over an immutable key set."""

    def __init__(self, dataset: Dataset, variant: str = "real", suffix_bits: int = 8,
                 hash_bits: int = 8, hash_seed: int = 0):
        if variant not in VARIANTS:
            raise ValueError(f"unknown SuRF variant {variant!r}")
        if suffix_bits % 8 or suffix_bits < 0:
            raise ValueError("suffix_bits must be a non-negative multiple of 8")
        if not 1 <= hash_bits <= 64:
            raise ValueError("hash_bits must be in 1..64")
        self.variant = variant
        self.kind = f"surf-{variant}"
        self.suffix_bits = suffix_bits if variant == "real" else 0
        self.hash_bits = hash_bits if variant == "hash" else 0
        self.hash_seed = hash_seed
        self.hash_mask = (1 << hash_bits) - 1
        self.dataset = dataset
        self.n_keys = len(dataset)
        _, self.unique_lens = prefix_lengths(dataset)
        self.width = dataset.width
        self._trie: SurfTrie | None = None
        self.stored = self.thresh = self.stored_hash = None
        if dataset.fixed:
            self.stored = dataset.packed
            u = self.unique_lens
            if variant == "real":
                u = np.minimum(u + self.suffix_bits // 8, self.width)
            self.thresh = u.astype(np.uint8)
            if variant == "hash":
                self.stored_hash = kernels.hash_keys(self.stored, self.width, hash_seed)

    @property
    def trie(self) -> SurfTrie:
        if self._trie is None:
            self._trie = SurfTrie(self.dataset, self.unique_lens.tolist(), self.variant,
                                  self.suffix_bits // 8, self.hash_mask, self.hash_seed)
        return self._trie

    def contains_many(self, packed: np.ndarray, width: int) -> np.ndarray:
        packed = np.asarray(packed, dtype=np.uint64)
        if self.stored is None or width != self.width:
            return np.fromiter((self.trie.contains(int(v).to_bytes(width, "big"))
                                for v in packed.tolist()), dtype=bool, count=packed.size)
        qh = None
        if self.stored_hash is not None:
            qh = kernels.hash_keys(packed, width, self.hash_seed)
        return kernels.surf_probe(self.stored, self.thresh, self.stored_hash,
                                  self.hash_mask, packed, qh, width)

    def contains(self, key: bytes) -> bool:
        if self.stored is not None and len(key) == self.width:
            return bool(self.contains_many(np.array([int.from_bytes(key, "big")],
                                                    dtype=np.uint64), self.width)[0])
        return self.trie.contains(key)

    def range_query(self, lo: bytes, hi: bytes) -> bool:
        return self.trie.range_query(lo, hi)

    def node_count(self) -> int:
        if self.stored is None:
            return self.trie.n_nodes
        total = 1
        u = self.unique_lens
        for length in range(1, int(u.max()) + 1):
            sel = self.stored[u >= length] >> np.uint64(8 * (self.width - length))
            total += int(np.unique(sel).size)
        return total

    def size_bits(self) -> int:
        """Rough succinct-encoding size: ~10 bits per node plus per-leaf extras."""
        return 10 * self.node_count() + self.n_keys * (self.suffix_bits + self.hash_bits)

    def params(self) -> dict:
        return {"variant": self.variant, "suffix_bits": self.suffix_bits,
                "hash_bits": self.hash_bits, "hash_seed": self.hash_seed}
