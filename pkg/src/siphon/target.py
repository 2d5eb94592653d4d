"""The attacked system: ACL-checked responses with modelled response times.

A :class:`System` wraps an :class:`~siphon.store.LsmTree`. Each get is
answered with an :class:`Outcome` and a latency drawn from one of three
regimes: *fast* (no SSTable read), *cached* (every read hit the page
cache) or *slow* (at least one storage read).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .filters import FilterConfig
from .keyspace import Dataset
from .store import CACHE, MEMTABLE, SERVED_CODES, STORAGE, LsmTree, load_store

FAST, CACHED, SLOW = 0, 1, 2
DISTINGUISHING = "distinguishing"
NON_DISTINGUISHING = "non_distinguishing"


class Outcome(IntEnum):
    NOT_FOUND = 0
    UNAUTHORIZED = 1
    VALUE = 2


_WIRE = {Outcome.NOT_FOUND: b"404 not found", Outcome.UNAUTHORIZED: b"403 unauthorized"}


@dataclass(frozen=True)
class QueryOutcome:
    outcome: Outcome
    latency_us: float
    value_seed: int | None = None

    def wire(self) -> bytes:
        """Bytes an external client would see (latency aside)."""
        if self.outcome == Outcome.VALUE:
            return b"200 " + str(self.value_seed).encode()
        return _WIRE[self.outcome]


@dataclass(frozen=True)
class AclPolicy:
    mode: str = DISTINGUISHING

    def __post_init__(self):
        if self.mode not in (DISTINGUISHING, NON_DISTINGUISHING):
            raise ValueError(f"unknown ACL mode {self.mode!r}")

    def visible(self, outcome: Outcome) -> Outcome:
        if self.mode == NON_DISTINGUISHING and outcome == Outcome.UNAUTHORIZED:
            return Outcome.NOT_FOUND
        return outcome


@dataclass
class LatencyModel:
    fast_mean_us: float = 7.0
    fast_sigma_us: float = 2.0
    cached_mean_us: float = 15.0
    cached_sigma_us: float = 4.0
    slow_mean_us: float = 80.0
    slow_sigma_us: float = 15.0
    tail_prob: float = 0.05
    tail_scale_us: float = 40.0
    floor_us: float = 1.0

    def separated(self) -> bool:
        """Whether a fast sample exceeds a slow one with probability below 1e-4."""
        gap = self.slow_mean_us - self.fast_mean_us
        return gap >= 3.72 * math.hypot(self.fast_sigma_us, self.slow_sigma_us)

    def sample(self, regimes: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        regimes = np.asarray(regimes)
        mean = np.choose(regimes, [self.fast_mean_us, self.cached_mean_us, self.slow_mean_us])
        sigma = np.choose(regimes, [self.fast_sigma_us, self.cached_sigma_us, self.slow_sigma_us])
        out = rng.normal(mean, sigma)
        # heavy tail only on the I/O path
        tail = (regimes == SLOW) & (rng.random(regimes.shape) < self.tail_prob)
        out[tail] += rng.exponential(self.tail_scale_us, int(tail.sum()))
        return np.maximum(out, self.floor_us)


@dataclass
class SystemConfig:
    latency: LatencyModel = field(default_factory=LatencyModel)
    acl_mode: str = DISTINGUISHING
    eviction_ops: int = 10_000
    acl_fraction: float = 1.0
    idealized: bool = False
    principal: str = "attacker"
    block_entries: int = 4
    sstable_capacity: int = 1 << 14
    memtable_limit: int = 1 << 14
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "SystemConfig":
        d = dict(d)
        lat = LatencyModel(**d.pop("latency", {}))
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown system config fields: {sorted(unknown)}")
        return cls(latency=lat, **d)

    @classmethod
    def load(cls, path: str | Path) -> "SystemConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)


class IdealizedDisabled(RuntimeError):
    pass


class System:
    """The façade an attacker talks to."""

    def __init__(self, store: LsmTree, config: SystemConfig | None = None,
                 dataset: Dataset | None = None):
        self.store = store
        self.config = config or SystemConfig()
        self.acl = AclPolicy(self.config.acl_mode)
        self.latency = self.config.latency
        self.rng = np.random.default_rng(self.config.seed)
        self.bg_rng = np.random.default_rng([self.config.seed, 0xB6])
        self.dataset = dataset
        self.store.eviction_ops = self.config.eviction_ops
        self.queries = 0
        self.background_ops = 0

    @classmethod
    def build(cls, d: Dataset, filter_cfg: FilterConfig,
              config: SystemConfig | None = None) -> "System":
        config = config or SystemConfig()
        store = load_store(d, filter_cfg, acl_fraction=config.acl_fraction, seed=config.seed,
                           memtable_limit=config.memtable_limit,
                           sstable_capacity=config.sstable_capacity,
                           block_entries=config.block_entries,
                           eviction_ops=config.eviction_ops)
        store.freeze()
        return cls(store, config, d)

    @property
    def filter_cfg(self) -> FilterConfig:
        return self.store.filter_cfg

    def _classify(self, value) -> Outcome:
        if value is None:
            return Outcome.NOT_FOUND
        if value.readable_by(self.config.principal) or value.readable_by("*"):
            return Outcome.VALUE
        return self.acl.visible(Outcome.UNAUTHORIZED)

    @staticmethod
    def _regimes(reads: np.ndarray, served: np.ndarray) -> np.ndarray:
        reg = np.full(reads.shape, FAST, dtype=np.int8)
        reg[served == SERVED_CODES[CACHE]] = CACHED
        reg[served == SERVED_CODES[STORAGE]] = SLOW
        reg[served == SERVED_CODES[MEMTABLE]] = FAST
        return reg

    def system_get(self, key: bytes) -> QueryOutcome:
        value, trace = self.store.get(key)
        self.queries += 1
        reg = self._regimes(np.array([trace.sstables_read]),
                            np.array([SERVED_CODES[trace.served_from]]))
        lat = float(self.latency.sample(reg, self.rng)[0])
        return QueryOutcome(self._classify(value), lat, None if value is None else value.seed)

    def system_get_many(self, packed: np.ndarray, width: int, stop_at_hit: bool = False):
        """Batched gets in order; returns (outcomes, latencies_us, processed).

        With ``stop_at_hit`` the batch ends after the first key that exists.
        """
        res = self.store.get_many(packed, width, stop_at_hit=stop_at_hit)
        self.queries += res.processed
        outcomes = np.zeros(res.processed, dtype=np.int8)
        for i, v in res.hits.items():
            outcomes[i] = self._classify(v)
        lat = self.latency.sample(self._regimes(res.reads, res.served), self.rng)
        return outcomes, lat, res.processed

    def idealized_probe(self, key: bytes) -> bool:
        if not self.config.idealized:
            raise IdealizedDisabled("system was not built with idealized mode enabled")
        _, trace = self.store.get(key)
        self.queries += 1
        return trace.filters_passed > 0

    def idealized_probe_many(self, packed: np.ndarray, width: int) -> np.ndarray:
        if not self.config.idealized:
            raise IdealizedDisabled("system was not built with idealized mode enabled")
        res = self.store.get_many(packed, width)
        self.queries += res.processed
        return res.passed > 0

    def run_background_load(self, ops: int) -> None:
        """Issue ``ops`` gets from other clients, half of them for stored keys.

        These gets advance the eviction clock and the store counters; the
        blocks they read are not made resident (see the store's cache model).
        """
        if ops <= 0:
            return
        d = self.dataset
        if d is None or not d.fixed:
            self.store.advance_clock(ops)
            self.background_ops += ops
            return
        present = self.bg_rng.random(ops) < 0.5
        keys = self.bg_rng.integers(0, 1 << d.key_len_bits, ops, dtype=np.uint64) \
            if d.key_len_bits < 64 else self.bg_rng.integers(0, 2**64, ops, dtype=np.uint64)
        keys[present] = d.packed[self.bg_rng.integers(0, len(d), int(present.sum()))]
        self.store.get_many(keys, d.width, touch=False)
        self.background_ops += ops

    def wait_for_eviction(self) -> None:
        self.run_background_load(self.config.eviction_ops)


def latency_histogram(latencies: np.ndarray, bucket_us: float = 5.0,
                      fp_mask: np.ndarray | None = None, max_us: float | None = None) -> list[dict]:
    """Rows ``bucket_lo_us, bucket_hi_us, count[, fp_count]`` (empty input, no rows)."""
    lat = np.asarray(latencies, dtype=float)
    if lat.size == 0:
        return []
    top = max_us if max_us is not None else lat.max()
    nb = int(top // bucket_us) + 1
    idx = np.minimum((lat // bucket_us).astype(np.int64), nb - 1)
    counts = np.bincount(idx, minlength=nb)
    fp = np.bincount(idx[fp_mask], minlength=nb) if fp_mask is not None else None
    rows = []
    for b in range(nb):
        row = {"bucket_lo_us": b * bucket_us, "bucket_hi_us": (b + 1) * bucket_us,
               "count": int(counts[b])}
        if fp is not None:
            row["fp_count"] = int(fp[b])
        rows.append(row)
    return rows
