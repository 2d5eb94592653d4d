"""FindFPK, IdPrefix and suffix search against SuRF-guarded stores."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..keyspace import key_hash, pack, unpack
from ..target import DISTINGUISHING, Outcome, System
from .classifier import Prober, random_keys


class AbandonedRound(RuntimeError):
    """The candidate no longer classifies positive."""


@dataclass(frozen=True)
class CandidatePrefix:
    bytes: bytes
    source_fp_key: bytes
    hash_constraint: int | None = None

    @property
    def length_bits(self) -> int:
        return 8 * len(self.bytes)


@dataclass(frozen=True)
class HashContext:
    """The public key hash a SuRF-Hash filter uses."""

    seed: int
    mask: int

    @classmethod
    def for_system(cls, sys: System) -> "HashContext | None":
        cfg = sys.filter_cfg
        if cfg.kind != "surf-hash":
            return None
        return cls(cfg.seed, (1 << cfg.surf_hash_bits) - 1)

    def of(self, packed: np.ndarray, width: int) -> np.ndarray:
        return kernels.hash_keys(packed, width, self.seed) & np.uint64(self.mask)


def find_fpk_surf(prober: Prober, n_guesses: int, key_bits: int, seed: int = 0,
                  chunk: int = 1 << 20) -> np.ndarray:
    """Uniformly random guesses that classify positive (packed)."""
    rng = np.random.default_rng([seed, 0x51])
    hits = []
    for lo in range(0, n_guesses, chunk):
        g = random_keys(rng, min(chunk, n_guesses - lo), key_bits)
        hits.append(g[prober.classify(g, key_bits // 8)])
    return np.concatenate(hits) if hits else np.zeros(0, dtype=np.uint64)


def _mutate(key: int, j: int, width: int) -> int:
    shift = 8 * (width - 1 - j)
    b = (key >> shift) & 0xFF
    return key ^ (b << shift) ^ (((b + 1) & 0xFF) << shift)


def _hash_mutation(key: int, j: int, width: int, hc: HashContext, rng: np.random.Generator,
                   max_trials: int) -> tuple[int | None, int]:
    """A key differing from ``key`` at byte ``j``, arbitrary after it, with the same hash bits.

    Returns (key or None, local hash evaluations).
    """
    target = key_hash(unpack(key, width), hc.seed) & hc.mask
    shift = 8 * (width - 1 - j)
    head = (key >> (shift + 8)) << (shift + 8)
    b = (key >> shift) & 0xFF
    if shift == 0:
        cands = np.array([head | ((b + d) & 0xFF) for d in range(1, 256)], dtype=np.uint64)
    else:
        v = (b + rng.integers(1, 256, max_trials)) & 0xFF
        tail = rng.integers(0, 1 << shift, max_trials, dtype=np.uint64) if shift < 64 else \
            rng.integers(0, 2**64, max_trials, dtype=np.uint64)
        cands = np.uint64(head) | (v.astype(np.uint64) << np.uint64(shift)) | tail
    ok = np.flatnonzero(hc.of(cands, width) == np.uint64(target))
    if ok.size == 0:
        return None, cands.size
    return int(cands[ok[0]]), int(ok[0]) + 1


@dataclass
class IdPrefixResult:
    prefix_len: np.ndarray      # bytes; -1 when abandoned
    queries: np.ndarray         # per round
    hash_trials: int
    iterations: list            # (iteration, queries, positives)


def id_prefix_many(prober: Prober, kappas: np.ndarray, width: int,
                   hc: HashContext | None = None, seed: int = 0,
                   hash_trials: int | None = None) -> IdPrefixResult:
    """Breadth-first fixed-length IdPrefix over many positive keys.

    Iteration 0 re-probes every key; later iterations mutate one byte per
    round, walking from the last byte towards the first. The first mutation
    that turns a round negative ends its prefix at that byte.
    """
    kappas = np.asarray(kappas, dtype=np.uint64)
    r = kappas.size
    plen = np.full(r, -1, dtype=np.int64)
    queries = np.zeros(r, dtype=np.int64)
    trials = 0
    rng = np.random.default_rng([seed, 0x1D])
    max_trials = hash_trials or (64 << (hc.mask.bit_length() if hc else 0))
    iters = []
    if r == 0:
        return IdPrefixResult(plen, queries, 0, iters)
    ok = prober.classify(kappas, width)
    queries += 1
    iters.append((0, r, int(ok.sum())))
    active = np.flatnonzero(ok)
    pos = np.full(r, width - 1, dtype=np.int64)
    kl = kappas.tolist()
    it = 0
    while active.size:
        it += 1
        probe_idx, probe_keys = [], []
        for i in active.tolist():
            while pos[i] >= 0:
                if hc is None:
                    probe_keys.append(_mutate(kl[i], int(pos[i]), width))
                    break
                k, t = _hash_mutation(kl[i], int(pos[i]), width, hc, rng, max_trials)
                trials += t
                if k is not None:
                    probe_keys.append(k)
                    break
                pos[i] -= 1  # no colliding mutation here; skip the position
            if pos[i] < 0:
                plen[i] = 0
            else:
                probe_idx.append(i)
        if not probe_idx:
            break
        idx = np.array(probe_idx)
        res = prober.classify(np.array(probe_keys, dtype=np.uint64), width)
        queries[idx] += 1
        iters.append((it, idx.size, int(res.sum())))
        done = idx[~res]
        plen[done] = pos[done] + 1
        cont = idx[res]
        pos[cont] -= 1
        exhausted = cont[pos[cont] < 0]
        plen[exhausted] = 0
        active = cont[pos[cont] >= 0]
    return IdPrefixResult(plen, queries, trials, iters)


def id_prefix_surf(sys: System, prober: Prober, kappa: bytes, variant: str = "base",
                   fixed_length: bool | None = None, seed: int = 0) -> CandidatePrefix:
    """Recover the stored prefix a single positive key ``kappa`` shares.

    Fixed-length keys are mutated byte by byte from the tail; variable-length
    keys are shortened one byte at a time instead.
    """
    if fixed_length is None:
        fixed_length = sys.dataset is not None and sys.dataset.fixed
    hc = HashContext.for_system(sys) if variant == "hash" else None
    constraint = None if hc is None else key_hash(kappa, hc.seed) & hc.mask
    if fixed_length:
        if len(kappa) > 8:
            raise ValueError("fixed-length IdPrefix handles keys of at most 8 bytes")
        res = id_prefix_many(prober, np.array([pack(kappa)], dtype=np.uint64), len(kappa), hc, seed)
        if res.prefix_len[0] < 0:
            raise AbandonedRound("key classified negative on re-probe")
        return CandidatePrefix(kappa[:res.prefix_len[0]], kappa, constraint)
    if not prober.classify_bytes(kappa):
        raise AbandonedRound("key classified negative on re-probe")
    for cut in range(len(kappa) - 1, -1, -1):
        if not prober.classify_bytes(kappa[:cut]):
            return CandidatePrefix(kappa[:cut + 1], kappa, constraint)
    return CandidatePrefix(b"", kappa, constraint)


@dataclass
class Extension:
    key: bytes | None
    queries: int
    enumerated: int


def extend_prefix(sys: System, pfx: CandidatePrefix, width: int, budget: int | None = None,
                  hc: HashContext | None = None, chunk: int = 1 << 16) -> Extension:
    """Try every completion of ``pfx`` in lexicographic order until one exists.

    With a hash context, completions whose hash bits differ from the
    prefix's constraint are skipped without querying.
    """
    if sys.acl.mode != DISTINGUISHING:
        raise ValueError("suffix search needs responses that reveal unauthorized keys")
    L = len(pfx.bytes)
    if L > width:
        raise ValueError("prefix longer than the key")
    sbits = 8 * (width - L)
    space = 1 << sbits
    head = pack(pfx.bytes) << sbits if L else 0
    queries = enumerated = 0
    start = 0
    while start < space and (budget is None or queries < budget):
        stop = min(space, start + chunk)
        cands = np.uint64(head) | np.arange(start, stop, dtype=np.uint64)
        enumerated += cands.size
        if hc is not None and pfx.hash_constraint is not None:
            cands = cands[hc.of(cands, width) == np.uint64(pfx.hash_constraint)]
        if budget is not None:
            cands = cands[: budget - queries]
        start = stop
        if cands.size == 0:
            continue
        outcomes, _, n = sys.system_get_many(cands, width, stop_at_hit=True)
        queries += n
        if n and outcomes[n - 1] != Outcome.NOT_FOUND:
            hit = int(cands[n - 1])
            # completions enumerated up to and including the hit
            return Extension(unpack(hit, width), queries, hit - head + 1)
    return Extension(None, queries, enumerated)
