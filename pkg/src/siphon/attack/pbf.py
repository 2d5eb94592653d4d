"""Prefix-length detection and FindFPK against prefix Bloom filters."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import binom, norm

from .classifier import Prober, random_keys


class DetectionError(RuntimeError):
    """No candidate prefix length stands out from the baseline."""


@dataclass
class Detection:
    length_bits: int
    fractions: dict
    z_scores: dict
    baseline: float
    z_margin: float
    queries: int


def _probe_strings(rng, count: int, bits: int) -> np.ndarray:
    """``count`` random strings, or every string once if the space is that small."""
    if bits < 64 and 1 << bits <= count:
        return np.arange(1 << bits, dtype=np.uint64)
    return random_keys(rng, count, bits)


def _excess_z(k1: int, n1: int, k0: int, n0: int) -> float:
    """Normal score of k1/n1 exceeding k0/n0 (exact conditional binomial test).

    Positives are rare, so given k1 + k0 hits the share landing in the
    first sample is binomial with rate n1 / (n1 + n0) under equal rates.
    """
    if k1 + k0 == 0:
        return 0.0
    p = float(binom.sf(k1 - 1, k1 + k0, n1 / (n1 + n0)))
    return float(norm.isf(min(max(p, 1e-300), 1 - 1e-16)))


def detect_pbf_prefix_len(prober: Prober, key_bits: int, probes: int = 100_000,
                          lengths=None, margin: float = 3.0, seed: int = 0) -> Detection:
    """Length l' whose random l'-bit queries are most often positive.

    Full-length random keys give the filter's baseline rate. Each candidate
    length is scored by an exact test of its positive count against that
    baseline, expressed as a normal score; the best score must beat the runner-up by
    ``margin``.
    """
    if probes < 1000:
        raise ValueError("detection needs at least 10^3 probes per length")
    if lengths is None:
        lengths = range(8, key_bits - 7, 8)
    lengths = list(lengths)
    if len(lengths) < 2:
        raise ValueError("need at least two candidate lengths")
    rng = np.random.default_rng([seed, 0xD7])
    before = prober.queries
    base_hits = int(prober.classify(random_keys(rng, probes, key_bits), key_bits // 8).sum())
    base = base_hits / probes
    frac, z = {}, {}
    for lb in lengths:
        if lb % 8 or not 8 <= lb <= 64:
            raise ValueError("candidate lengths must be byte multiples in 8..64")
        q = _probe_strings(rng, probes, lb)
        hits = int(prober.classify(q, lb // 8).sum())
        frac[lb] = hits / q.size
        z[lb] = _excess_z(hits, q.size, base_hits, probes)
    order = sorted(z, key=z.get, reverse=True)
    gap = z[order[0]] - z[order[1]]
    if gap < margin or z[order[0]] < margin:
        raise DetectionError(f"no prefix length stands out (best gap {gap:.2f} < {margin})")
    return Detection(order[0], frac, z, base, gap, prober.queries - before)


def find_fpk_pbf(prober: Prober, length_bits: int, n_guesses: int, seed: int = 0,
                 chunk: int = 1 << 20) -> np.ndarray:
    """Random ``length_bits``-bit strings that classify positive (packed)."""
    rng = np.random.default_rng([seed, 0xF9])
    hits = []
    for lo in range(0, n_guesses, chunk):
        g = random_keys(rng, min(chunk, n_guesses - lo), length_bits)
        hits.append(g[prober.classify(g, length_bits // 8)])
    return np.concatenate(hits) if hits else np.zeros(0, dtype=np.uint64)
