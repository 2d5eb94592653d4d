"""Turning responses into filter verdicts: timing cutoff and probers."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..target import System

log = logging.getLogger("siphon.attack")


class ClassifierError(RuntimeError):
    """Latency histogram has no usable valley between two modes."""


def random_keys(rng: np.random.Generator, count: int, bits: int) -> np.ndarray:
    """``count`` uniformly random ``bits``-bit keys, packed."""
    if bits == 64:
        return rng.integers(0, 2**64, count, dtype=np.uint64, endpoint=False)
    return rng.integers(0, 1 << bits, count, dtype=np.uint64)


@dataclass
class TimingClassifier:
    cutoff_us: float
    bucket_us: float = 5.0
    histogram: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    samples_per_key: int = 4

    def positive(self, mean_latency_us):
        return np.asarray(mean_latency_us) > self.cutoff_us


def find_valley(counts: np.ndarray, bucket_us: float, smooth: int = 3) -> float:
    """Cutoff at the centre of the lowest stretch between the two main modes."""
    counts = np.asarray(counts, dtype=float)
    if counts.size < 3:
        raise ClassifierError("histogram too short")
    s = np.convolve(counts, np.ones(smooth) / smooth, mode="same")
    padded = np.concatenate([[-1.0], s, [-1.0]])
    peaks = [i for i in range(s.size) if padded[i + 1] > padded[i] and padded[i + 1] >= padded[i + 2]]
    if not peaks:
        raise ClassifierError("histogram has no mode")
    top = max(peaks, key=lambda i: s[i])
    # second mode: tallest peak separated from the first by a real dip
    best = None
    for p in peaks:
        if p == top:
            continue
        a, b = sorted((top, p))
        if s[a:b + 1].min() < 0.5 * s[p] and (best is None or s[p] > s[best]):
            best = p
    if best is None:
        raise ClassifierError("latency histogram is unimodal; cannot separate hits from misses")
    a, b = sorted((top, best))
    seg = s[a:b + 1]
    low = np.flatnonzero(seg == seg.min()) + a
    # contiguous run of minima that starts at the first minimum
    run_end = low[0]
    for i in low[1:]:
        if i != run_end + 1:
            break
        run_end = i
    return (low[0] + run_end + 1) / 2 * bucket_us


def learn_cutoff(sys: System, probes: int = 1_000_000, seed: int = 0, key_bits: int | None = None,
                 bucket_us: float = 5.0, samples_per_key: int = 4) -> TimingClassifier:
    """Estimate the fast/slow cutoff from gets for uniformly random keys."""
    if probes < 10_000:
        raise ValueError("learning a cutoff needs at least 10^4 probes")
    bits = key_bits or sys.dataset.key_len_bits
    rng = np.random.default_rng([seed, 0xC0])
    keys = random_keys(rng, probes, bits)
    _, lat, _ = sys.system_get_many(keys, bits // 8)
    sys.wait_for_eviction()
    idx = (lat // bucket_us).astype(np.int64)
    hist = np.bincount(idx)
    cutoff = find_valley(hist, bucket_us)
    log.info("cutoff learned: %.1f us from %d probes", cutoff, probes)
    return TimingClassifier(cutoff, bucket_us, hist, samples_per_key)


class Prober:
    """Answers "did some filter pass this key?" and counts queries spent."""

    def __init__(self, sys: System):
        self.sys = sys
        self.queries = 0

    def classify(self, packed: np.ndarray, width: int) -> np.ndarray:
        raise NotImplementedError

    def classify_bytes(self, key: bytes) -> bool:
        raise NotImplementedError


class IdealizedProber(Prober):
    """Reads the store's filter counters directly (upper-bound baseline)."""

    def classify(self, packed, width):
        packed = np.asarray(packed, dtype=np.uint64)
        self.queries += packed.size
        if packed.size == 0:
            return np.zeros(0, dtype=bool)
        return self.sys.idealized_probe_many(packed, width)

    def classify_bytes(self, key):
        self.queries += 1
        return self.sys.idealized_probe(key)


class TimedProber(Prober):
    """Averages ``samples_per_key`` response times per key against a cutoff.

    Samples are taken in rounds over the whole batch; the order is shuffled
    every round and the prober waits for cache eviction between rounds.
    """

    def __init__(self, sys: System, classifier: TimingClassifier, seed: int = 0,
                 chunk: int = 1 << 20):
        super().__init__(sys)
        self.cls = classifier
        self.rng = np.random.default_rng([seed, 0x71])
        self.chunk = chunk

    def classify(self, packed, width):
        packed = np.asarray(packed, dtype=np.uint64)
        out = np.zeros(packed.size, dtype=bool)
        for lo in range(0, packed.size, self.chunk):
            part = packed[lo:lo + self.chunk]
            acc = np.zeros(part.size)
            for _ in range(self.cls.samples_per_key):
                perm = self.rng.permutation(part.size)
                _, lat, _ = self.sys.system_get_many(part[perm], width)
                acc[perm] += lat
                self.sys.wait_for_eviction()
            self.queries += part.size * self.cls.samples_per_key
            out[lo:lo + part.size] = self.cls.positive(acc / self.cls.samples_per_key)
        return out

    def classify_bytes(self, key):
        total = 0.0
        for _ in range(self.cls.samples_per_key):
            total += self.sys.system_get(key).latency_us
            self.sys.wait_for_eviction()
        self.queries += self.cls.samples_per_key
        return bool(self.cls.positive(total / self.cls.samples_per_key))


def is_positive(sys: System, cls: TimingClassifier | None, key: bytes) -> bool:
    """Single-key verdict; ``cls=None`` uses idealized counters."""
    prober = IdealizedProber(sys) if cls is None else TimedProber(sys, cls)
    return prober.classify_bytes(key)


def is_positive_many(sys: System, cls: TimingClassifier | None, packed: np.ndarray,
                     width: int, seed: int = 0) -> np.ndarray:
    prober = IdealizedProber(sys) if cls is None else TimedProber(sys, cls, seed)
    return prober.classify(packed, width)
