"""Approximate-membership filters guarding SSTables.

Every filter answers ``contains(key)`` with no false negatives and offers a
batched ``contains_many(packed, width)`` for fixed-width packed keys.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..keyspace import Dataset, prf_stream
from .bloom import BloomFilter, PrefixBloomFilter
from .surf import SurfFilter, SurfTrie

KINDS = ("bloom", "surf-base", "surf-real", "surf-hash", "pbf")


class FilterConfigError(ValueError):
    pass


@dataclass
class FilterConfig:
    kind: str = "surf-real"
    bits_per_key: float = 18.0
    surf_hash_bits: int = 8
    surf_real_suffix_bits: int = 8
    pbf_prefix_len: int | None = None
    seed: int = 0

    def validate(self) -> "FilterConfig":
        if self.kind not in KINDS:
            raise FilterConfigError(f"unknown filter kind {self.kind!r}")
        if not self.bits_per_key > 0:
            raise FilterConfigError("bits_per_key must be positive")
        if self.kind == "pbf":
            if self.pbf_prefix_len is None:
                raise FilterConfigError("pbf needs pbf_prefix_len")
            if self.pbf_prefix_len <= 0 or self.pbf_prefix_len % 8:
                raise FilterConfigError("pbf_prefix_len must be a positive multiple of 8")
        if self.surf_real_suffix_bits % 8:
            raise FilterConfigError("surf_real_suffix_bits must be a multiple of 8")
        if not 1 <= self.surf_hash_bits <= 64:
            raise FilterConfigError("surf_hash_bits must be in 1..64")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "FilterConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known).validate()


def build(d: Dataset, cfg: FilterConfig):
    """Build the filter described by ``cfg`` over ``d``."""
    cfg.validate()
    if len(d) == 0:
        raise ValueError("cannot build a filter over an empty dataset")
    if cfg.kind == "bloom":
        f = BloomFilter.for_capacity(len(d), cfg.bits_per_key, cfg.seed)
        if d.fixed:
            from .. import kernels
            f.add_hashes(kernels.hash_keys(d.packed, d.width, cfg.seed))
        else:
            f.add_many(d.keys)
    elif cfg.kind == "pbf":
        if d.width is not None and cfg.pbf_prefix_len >= d.key_len_bits:
            raise FilterConfigError("pbf prefix must be shorter than the keys")
        f = PrefixBloomFilter.from_keys(d.keys, cfg.pbf_prefix_len, cfg.bits_per_key, cfg.seed)
    else:
        variant = cfg.kind.split("-", 1)[1]
        f = SurfFilter(d, variant, cfg.surf_real_suffix_bits, cfg.surf_hash_bits, cfg.seed)
    f.n_keys = len(d)
    f.width = d.width
    f.members = d
    return f


def point_query(f, key: bytes) -> bool:
    return f.contains(key)


def prefix_query(f: PrefixBloomFilter, prefix: bytes) -> bool:
    return f.prefix_query(prefix)


def surf_range_query(f: SurfFilter, lo: bytes, hi: bytes) -> bool:
    return f.range_query(lo, hi)


def random_non_members(members: Dataset, count: int, seed: int) -> np.ndarray:
    """``count`` uniformly random packed keys of the dataset's width, none stored."""
    if not members.fixed:
        raise ValueError("random probes need a fixed-width dataset")
    m = members.key_len_bits
    if count > (1 << m) - len(members):
        raise ValueError("not enough non-member keys in the key space")
    out = []
    got = 0
    start = 0
    shift = np.uint64(64 - m)
    while got < count:
        batch = prf_stream(seed ^ 0x5EED, start, max(count - got, 1024) + 64) >> shift
        start += batch.size
        pos = np.searchsorted(members.packed, batch)
        pos = np.minimum(pos, members.packed.size - 1)
        batch = batch[members.packed[pos] != batch][: count - got]
        out.append(batch)
        got += batch.size
    return np.concatenate(out)


def false_positive_keys(f, count: int, seed: int = 0, max_rounds: int = 1000) -> np.ndarray:
    """``count`` distinct non-member keys that ``f`` passes (packed).

    For flat SuRFs keys are built by completing a stored key's accepted
    prefix at random; other filters are sampled by rejection.
    """
    d = f.members
    if not d.fixed:
        raise ValueError("needs a fixed-width dataset")
    rng = np.random.default_rng([seed, 0xF1])
    w, m = d.width, d.key_len_bits
    found = np.zeros(0, dtype=np.uint64)
    batch = max(4 * count, 1024)
    for _ in range(max_rounds):
        if found.size >= count:
            break
        batch = min(2 * batch, 1 << 22)
        rand = rng.integers(0, 2**64, batch, dtype=np.uint64) >> np.uint64(64 - m)
        if getattr(f, "thresh", None) is not None:
            i = rng.integers(0, len(d), batch)
            free = 8 * (w - f.thresh[i].astype(np.int64))
            keep_mask = ~((np.uint64(1) << free.astype(np.uint64)) - np.uint64(1))
            keep_mask[free >= 64] = np.uint64(0)
            rand = (d.packed[i] & keep_mask) | (rand & ~keep_mask)
        ok = f.contains_many(rand, w)
        pos = np.minimum(np.searchsorted(d.packed, rand), len(d) - 1)
        ok &= d.packed[pos] != rand
        found = np.unique(np.concatenate([found, rand[ok]]))
    if found.size < count:
        raise ValueError("could not find enough false positives")
    return rng.permutation(found)[:count]


def measure_fpr(f, probes: int, seed: int) -> float:
    """Empirical FP / (FP + TN) over uniformly random non-member keys."""
    if probes < 1:
        raise ValueError("probes must be >= 1")
    q = random_non_members(f.members, probes, seed)
    return float(f.contains_many(q, f.width).mean())


def exact_surf_fpr(d: Dataset, variant: str = "base", suffix_bits: int = 8,
                   hash_bits: int = 8) -> float:
    """FPR of a SuRF over ``d`` for uniform non-member probes, by direct summation.

    Each stored key's leaf accepts every key starting with its unique
    prefix (plus suffix bytes for Real); Hash accepts a 2^-h share of those.
    """
    if not d.fixed:
        raise ValueError("needs a fixed-width dataset")
    from ..keyspace import prefix_lengths
    _, u = prefix_lengths(d)
    w = d.width
    if variant == "real":
        u = np.minimum(u + suffix_bits // 8, w)
    covered = np.ldexp(1.0, (8 * (w - u)).astype(np.int64))
    if variant == "hash":
        # the stored key itself always matches its own hash
        covered = 1.0 + (covered - 1.0) * 2.0 ** -hash_bits
    space = 2.0 ** (8 * w)
    return float((covered.sum() - len(d)) / (space - len(d)))


def filter_stats(f, fpr: float | None = None) -> dict:
    return {
        "kind": f.kind,
        "keys": int(f.n_keys),
        "bits_used": int(f.size_bits()),
        "bits_per_key": f.size_bits() / max(f.n_keys, 1),
        "empirical_fpr": fpr,
        "params": f.params(),
    }


def stats_json(f, fpr: float | None = None) -> str:
    return json.dumps(filter_stats(f, fpr), indent=2, sort_keys=True)


__all__ = [
    "KINDS", "BloomFilter", "PrefixBloomFilter", "SurfFilter", "SurfTrie",
    "FilterConfig", "FilterConfigError", "build", "point_query", "prefix_query",
    "surf_range_query", "measure_fpr", "false_positive_keys", "exact_surf_fpr",
    "random_non_members",
    "filter_stats", "stats_json",
]
