"""A miniature LSM-tree with filter-gated reads and a block-level page cache.

Reads consult the memtable, then level-0 runs newest first, then the
compacted level. An SSTable is read only when its key range covers the
query and its filter passes. Page-cache residency is tracked per data
block; a block stays resident until ``eviction_ops`` further gets have
been served or :meth:`LsmTree.evict_cache` is called.
"""
from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .filters import FilterConfig, build
from .keyspace import Dataset, pack

MEMTABLE = "memtable"
CACHE = "cache"
STORAGE = "storage"
NONE = "none"
SERVED_CODES = {NONE: 0, CACHE: 1, STORAGE: 2, MEMTABLE: 3}


@dataclass(frozen=True)
class Value:
    """Synthetic payload described by seed and size, plus its ACL."""

    seed: int
    size: int = 1000
    acl: frozenset = frozenset()

    def readable_by(self, principal: str) -> bool:
        return principal in self.acl

    def payload(self) -> bytes:
        rng = np.random.default_rng(self.seed)
        return rng.integers(0, 256, self.size, dtype=np.uint8).tobytes()


@dataclass
class QueryTrace:
    filters_probed: int = 0
    filters_passed: int = 0
    sstables_read: int = 0
    served_from: str = NONE
    storage_reads: int = 0


@dataclass
class BatchResult:
    """Outcome of :meth:`LsmTree.get_many` for the first ``processed`` keys."""

    processed: int
    hits: dict = field(default_factory=dict)
    probed: np.ndarray | None = None
    passed: np.ndarray | None = None
    reads: np.ndarray | None = None
    served: np.ndarray | None = None


class SSTable:
    def __init__(self, sst_id: int, level: int, keys: list[bytes], values: list[Value],
                 filter_cfg: FilterConfig, block_entries: int):
        self.id = sst_id
        self.level = level
        self.keys = keys
        self.values = values
        self.block_entries = block_entries
        self.dataset = Dataset.from_keys(keys)
        self.filter = build(self.dataset, filter_cfg)
        self.min_key = keys[0]
        self.max_key = keys[-1]
        self.last_touch: dict[int, int] = {}

    def __len__(self):
        return len(self.keys)

    def covers(self, key: bytes) -> bool:
        n = len(key)
        return self.min_key[:n] <= key <= self.max_key[:n]

    def covers_many(self, packed: np.ndarray, width: int) -> np.ndarray:
        if len(self.min_key) >= width and len(self.max_key) >= width:
            lo = np.uint64(pack(self.min_key[:width]))
            hi = np.uint64(pack(self.max_key[:width]))
            return (packed >= lo) & (packed <= hi)
        return np.fromiter((self.covers(int(v).to_bytes(width, "big")) for v in packed.tolist()),
                           dtype=bool, count=packed.size)

    def locate(self, key: bytes) -> tuple[int | None, int]:
        """(entry index or None, data block holding the key's position)."""
        i = bisect.bisect_left(self.keys, key)
        block = min(i, len(self.keys) - 1) // self.block_entries
        if i < len(self.keys) and self.keys[i] == key:
            return i, block
        return None, block

    def block_count(self) -> int:
        return math.ceil(len(self.keys) / self.block_entries)


class FrozenStoreError(RuntimeError):
    pass


class LsmTree:
    def __init__(self, filter_cfg: FilterConfig | None = None, memtable_limit: int = 1 << 14,
                 sstable_capacity: int = 1 << 14, block_entries: int = 4,
                 eviction_ops: int | None = None):
        if memtable_limit < 1 or sstable_capacity < 1 or block_entries < 1:
            raise ValueError("limits must be positive")
        self.filter_cfg = (filter_cfg or FilterConfig()).validate()
        self.memtable_limit = memtable_limit
        self.sstable_capacity = sstable_capacity
        self.block_entries = block_entries
        self.eviction_ops = eviction_ops
        self.memtable: dict[bytes, Value] = {}
        self.levels: list[list[SSTable]] = [[], []]
        self.clock = 0
        self.io_counter = 0
        self.filter_negative_counter = 0
        self.filter_positive_counter = 0
        self.get_counter = 0
        self.frozen = False
        self._next_id = 0

    # -- writes ---------------------------------------------------------

    def put(self, key: bytes, value: Value) -> None:
        if self.frozen:
            raise FrozenStoreError("store is frozen")
        self.memtable[bytes(key)] = value
        if len(self.memtable) >= self.memtable_limit:
            self.flush()

    def flush(self) -> None:
        if not self.memtable:
            return
        keys = sorted(self.memtable)
        sst = self._new_sstable(0, keys, [self.memtable[k] for k in keys])
        self.levels[0].insert(0, sst)
        self.memtable = {}

    def _new_sstable(self, level, keys, values) -> SSTable:
        sst = SSTable(self._next_id, level, keys, values, self.filter_cfg, self.block_entries)
        self._next_id += 1
        return sst

    def compact_all(self) -> None:
        """Merge everything into one sorted level, newest version winning."""
        self.flush()
        merged: dict[bytes, Value] = {}
        for sst in self.levels[1]:
            merged.update(zip(sst.keys, sst.values))
        for sst in reversed(self.levels[0]):
            merged.update(zip(sst.keys, sst.values))
        keys = sorted(merged)
        cap = self.sstable_capacity
        self.levels = [[], [self._new_sstable(1, keys[i:i + cap], [merged[k] for k in keys[i:i + cap]])
                            for i in range(0, len(keys), cap)]]

    def freeze(self) -> None:
        self.frozen = True

    # -- cache ------------------------------------------------------------

    def evict_cache(self) -> None:
        for sst in self.sstables():
            sst.last_touch.clear()

    def _resident(self, sst: SSTable, block: int, now: int) -> bool:
        t = sst.last_touch.get(block)
        if t is None:
            return False
        return self.eviction_ops is None or now - t < self.eviction_ops

    def advance_clock(self, ops: int) -> None:
        self.clock += ops

    def resident_blocks(self) -> int:
        return sum(self._resident(s, b, self.clock) for s in self.sstables() for b in s.last_touch)

    # -- reads ------------------------------------------------------------

    def sstables(self) -> list[SSTable]:
        return [s for level in self.levels for s in level]

    def _read(self, sst: SSTable, key: bytes, now: int, touch: bool, trace: QueryTrace):
        idx, block = sst.locate(key)
        trace.sstables_read += 1
        if self._resident(sst, block, now):
            if trace.served_from != STORAGE:
                trace.served_from = CACHE
        else:
            trace.storage_reads += 1
            trace.served_from = STORAGE
        if touch:
            sst.last_touch[block] = now
        return None if idx is None else sst.values[idx]

    def get(self, key: bytes, touch: bool = True) -> tuple[Value | None, QueryTrace]:
        key = bytes(key)
        self.clock += 1
        self.get_counter += 1
        now = self.clock
        trace = QueryTrace()
        if key in self.memtable:
            trace.served_from = MEMTABLE
            return self.memtable[key], trace
        value = None
        for sst in self.sstables():
            if not sst.covers(key):
                continue
            trace.filters_probed += 1
            if not sst.filter.contains(key):
                self.filter_negative_counter += 1
                continue
            self.filter_positive_counter += 1
            trace.filters_passed += 1
            self.io_counter += 1
            value = self._read(sst, key, now, touch, trace)
            if value is not None:
                break
        return value, trace

    def get_many(self, packed: np.ndarray, width: int, touch: bool = True,
                 stop_at_hit: bool = False) -> BatchResult:
        """Serve a sequence of fixed-width gets, in order.

        Equivalent to calling :meth:`get` once per key. With
        ``stop_at_hit`` the sequence ends right after the first key found.
        """
        packed = np.ascontiguousarray(packed, dtype=np.uint64)
        n = packed.size
        if self.memtable:
            return self._get_many_slow(packed, width, touch, stop_at_hit)
        probed = np.zeros(n, dtype=np.int32)
        passed = np.zeros(n, dtype=np.int32)
        gates = []
        for sst in self.sstables():
            idx = np.flatnonzero(sst.covers_many(packed, width))
            if idx.size == 0:
                continue
            ok = sst.filter.contains_many(packed[idx], width)
            probed[idx] += 1
            passed[idx[ok]] += 1
            gates.append((sst, idx, ok))
        cand = np.flatnonzero(passed)
        # per candidate: the covering SSTables in search order with their filter verdicts
        route: dict[int, list] = {int(i): [] for i in cand.tolist()}
        if cand.size:
            for sst, idx, ok in gates:
                sel = np.isin(idx, cand)
                for i, o in zip(idx[sel].tolist(), ok[sel].tolist()):
                    route[i].append((sst, o))
        reads = np.zeros(n, dtype=np.int32)
        served = np.zeros(n, dtype=np.int8)
        hits = {}
        processed = n
        base = self.clock
        for i in cand.tolist():
            now = base + i + 1
            trace = QueryTrace()
            value = None
            used = 0
            for sst, ok in route[i]:
                used += 1
                if not ok:
                    continue
                value = self._read(sst, int(packed[i]).to_bytes(width, "big"), now, touch, trace)
                if value is not None:
                    break
            probed[i] = used
            passed[i] = trace.sstables_read
            reads[i] = trace.sstables_read
            served[i] = SERVED_CODES[trace.served_from]
            if value is not None:
                hits[i] = value
                if stop_at_hit:
                    processed = i + 1
                    break
        self.clock = base + processed
        self.get_counter += processed
        p_probed, p_passed = probed[:processed], passed[:processed]
        self.filter_positive_counter += int(p_passed.sum())
        self.filter_negative_counter += int(p_probed.sum() - p_passed.sum())
        self.io_counter += int(reads[:processed].sum())
        return BatchResult(processed, hits, p_probed, p_passed, reads[:processed], served[:processed])

    def _get_many_slow(self, packed, width, touch, stop_at_hit) -> BatchResult:
        n = packed.size
        probed = np.zeros(n, dtype=np.int32)
        passed = np.zeros(n, dtype=np.int32)
        reads = np.zeros(n, dtype=np.int32)
        served = np.zeros(n, dtype=np.int8)
        hits = {}
        processed = n
        for i, v in enumerate(packed.tolist()):
            value, tr = self.get(v.to_bytes(width, "big"), touch=touch)
            probed[i], passed[i], reads[i] = tr.filters_probed, tr.filters_passed, tr.sstables_read
            served[i] = SERVED_CODES[tr.served_from]
            if value is not None:
                hits[i] = value
                if stop_at_hit:
                    processed = i + 1
                    break
        return BatchResult(processed, hits, probed[:processed], passed[:processed],
                           reads[:processed], served[:processed])

    def range_query(self, lo: bytes, hi: bytes) -> list[tuple[bytes, Value]]:
        if lo > hi:
            raise ValueError("range needs lo <= hi")
        self.clock += 1
        now = self.clock
        merged: dict[bytes, Value] = {}
        # oldest first so newer versions overwrite
        for sst in list(self.levels[1]) + list(reversed(self.levels[0])):
            if sst.max_key < lo or sst.min_key > hi:
                continue
            if not self._range_may_match(sst, lo, hi):
                self.filter_negative_counter += 1
                continue
            self.filter_positive_counter += 1
            self.io_counter += 1
            a = bisect.bisect_left(sst.keys, lo)
            b = bisect.bisect_right(sst.keys, hi)
            for block in range(a // sst.block_entries, max(a, b - 1) // sst.block_entries + 1):
                sst.last_touch[block] = now
            merged.update(zip(sst.keys[a:b], sst.values[a:b]))
        merged.update((k, v) for k, v in self.memtable.items() if lo <= k <= hi)
        return sorted(merged.items())

    @staticmethod
    def _range_may_match(sst: SSTable, lo: bytes, hi: bytes) -> bool:
        f = sst.filter
        if hasattr(f, "range_query"):
            return f.range_query(lo, hi)
        if lo == hi:
            return f.contains(lo)
        if hasattr(f, "prefix_query"):
            plen = f.prefix_len_bytes
            if len(lo) >= plen and len(hi) >= plen and lo[:plen] == hi[:plen]:
                return f.prefix_query(lo[:plen])
        return True

    # -- reporting --------------------------------------------------------

    def __len__(self):
        seen = set(self.memtable)
        for sst in self.sstables():
            seen.update(sst.keys)
        return len(seen)

    def stats(self) -> dict:
        return {
            "levels": [len(level) for level in self.levels],
            "entries_per_level": [sum(len(s) for s in level) for level in self.levels],
            "memtable_entries": len(self.memtable),
            "filter_kind": self.filter_cfg.kind,
            "io_counter": self.io_counter,
            "filter_positive_counter": self.filter_positive_counter,
            "filter_negative_counter": self.filter_negative_counter,
            "get_counter": self.get_counter,
            "clock": self.clock,
        }

    def stats_json(self) -> str:
        return json.dumps(self.stats(), indent=2, sort_keys=True)


def load_store(d: Dataset, filter_cfg: FilterConfig, acl_fraction: float = 1.0,
               owner: str = "owner", value_size: int = 1000, seed: int = 0,
               memtable_limit: int = 1 << 14, sstable_capacity: int = 1 << 14,
               block_entries: int = 4, eviction_ops: int | None = None,
               compact: bool = True) -> LsmTree:
    """Populate a store with ``d`` and compact it.

    A fraction ``acl_fraction`` of keys is readable only by ``owner``;
    the rest is public (readable by every principal named "public" or
    anyone listed in the ACL).
    """
    rng = np.random.default_rng(seed)
    private = rng.random(len(d)) < acl_fraction
    tree = LsmTree(filter_cfg, memtable_limit, sstable_capacity, block_entries, eviction_ops)
    seeds = rng.integers(0, 2**63, len(d))
    for i, key in enumerate(d):
        acl = frozenset({owner}) if private[i] else frozenset({owner, "*"})
        tree.put(key, Value(int(seeds[i]), value_size, acl))
    if compact:
        tree.compact_all()
    return tree
