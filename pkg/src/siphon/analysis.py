"""Closed-form costs and probabilities for the attack on uniform key sets.

Powers such as (1 - 2^-l)^(n-1) are evaluated in log space, and the
difference of two such powers via ``expm1``, so that n up to 10^8 and l
up to 64 keep full relative precision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

TABLE1_L = (32, 40, 48)
TABLE1_N = (10_000_000, 50_000_000, 100_000_000)


def _log_pow_one_minus(x: float, k: float) -> float:
    """log((1 - x)^k)."""
    return k * math.log1p(-x) if x < 1 else (-math.inf if k > 0 else 0.0)


def _diff_pows(x_hi: float, x_lo: float, k: float) -> float:
    """(1 - x_hi)^k - (1 - x_lo)^k for x_hi < x_lo."""
    a = _log_pow_one_minus(x_hi, k)
    b = _log_pow_one_minus(x_lo, k)
    if a - b > 1:  # no cancellation to guard against
        return math.exp(a) - math.exp(b)
    return math.exp(b) * math.expm1(a - b)


def prob_shared_prefix_exactly(l: int, n: int) -> float:
    """P(a key's longest prefix shared with any of n-1 others is exactly l bits)."""
    if l < 0 or n < 2:
        raise ValueError("need l >= 0 and n >= 2")
    return _diff_pows(2.0 ** -(l + 1), 2.0 ** -l, n - 1)


def prob_shared_prefix_bytes(s: int, n: int, symbol_bits: int = 8) -> float:
    """Same event at symbol granularity: exactly ``s`` whole symbols shared."""
    if s < 0 or n < 2:
        raise ValueError("need s >= 0 and n >= 2")
    b = symbol_bits
    return _diff_pows(2.0 ** -(b * s + b), 2.0 ** -(b * s), n - 1)


@dataclass(frozen=True)
class SurfAttackParams:
    n: int
    m: int
    l: int
    variant: str = "real"
    symbol_bits: int = 8
    suffix_bits: int = 8
    hash_bits: int = 8

    def __post_init__(self):
        if not 0 < self.l < self.m or self.n < 1:
            raise ValueError("need 0 < l < m and n >= 1")
        if self.variant not in ("base", "real", "hash"):
            raise ValueError(f"unknown variant {self.variant!r}")


def exploitable_guess_prob(pp: SurfAttackParams) -> float:
    """Probability that one random guess exposes a recovered prefix of exactly l bits.

    ``l`` counts the bits the attacker recovers: the unique prefix, plus the
    stored suffix for Real. The unique prefix is one symbol longer than the
    longest shared prefix, so the shared part is ``l - symbol - suffix``.
    """
    if pp.n < 2:
        return pp.n * 2.0 ** -pp.l
    extra = pp.suffix_bits if pp.variant == "real" else 0
    shared = pp.l - pp.symbol_bits - extra
    if shared < 0 or shared % pp.symbol_bits:
        return 0.0
    p = pp.n * 2.0 ** -pp.l * prob_shared_prefix_bytes(shared // pp.symbol_bits, pp.n,
                                                        pp.symbol_bits)
    if pp.variant == "hash":
        p *= 2.0 ** -pp.hash_bits
    return min(p, 1.0)


def expected_extension_queries(m: int, l: int) -> float:
    """Expected misses before the hit when searching 2^(m-l) completions holding one key."""
    if l >= m:
        raise ValueError("need l < m")
    return (2.0 ** (m - l) - 1) / 2


def brute_force_expected_queries(n: int, m: int) -> float:
    """Expected misses before a uniformly random search without repeats hits one of n keys."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return (2.0 ** m - n) / (n + 1)


def attack_cost_per_key(pp: SurfAttackParams) -> float:
    """Guesses to find one exploitable key, plus IdPrefix, plus suffix search."""
    p = exploitable_guess_prob(pp)
    if p == 0:
        return math.inf
    return 1 / p + pp.m + expected_extension_queries(pp.m, pp.l)


def brute_force_guess_prob(n: int, m: int) -> float:
    """Chance that one uniformly random guess is a stored key."""
    return n / 2.0 ** m


def reduction_factor(pp: SurfAttackParams) -> float:
    return brute_force_expected_queries(pp.n, pp.m) / attack_cost_per_key(pp)


def predict_table1(variant: str = "real", m: int = 64) -> list[dict]:
    """Grid of guess probabilities and brute-force reduction factors.

    Rows with ``l`` set to None hold the brute-force guess probability.
    """
    rows = []
    for l in TABLE1_L:
        for n in TABLE1_N:
            pp = SurfAttackParams(n, m, l, variant)
            rows.append({"l": l, "n": n, "p_star": exploitable_guess_prob(pp),
                         "reduction": reduction_factor(pp)})
    for n in TABLE1_N:
        rows.append({"l": None, "n": n, "p_star": brute_force_guess_prob(n, m),
                     "reduction": 1.0})
    return rows


def surf_fpr_estimate(n: int, m: int, variant: str = "base", suffix_bits: int = 8,
                      hash_bits: int = 8, symbol_bits: int = 8) -> float:
    """Expected FPR of a SuRF over n uniform m-bit keys for a uniform non-member probe."""
    w = m // symbol_bits
    if n < 2:
        return 0.0
    total = 0.0
    for s in range(w):
        u = s + 1
        if variant == "real":
            u += suffix_bits // symbol_bits
        if u >= w:
            continue  # the whole key is checked: only the key itself matches
        term = n * prob_shared_prefix_bytes(s, n, symbol_bits) * 2.0 ** (-symbol_bits * u)
        if variant == "hash":
            term *= 2.0 ** -hash_bits
        total += term
    return min(total, 1.0)


def predict_attack(n: int, m: int, variant: str = "real", min_prefix_bits: int = 40,
                   guesses: int | None = None, suffix_bits: int = 8,
                   hash_bits: int = 8) -> dict:
    """Expected per-step query counts and queries per extracted key.

    Works at symbol (byte) granularity over the distribution of unique
    prefix lengths. With ``guesses`` given, repeated hits on the same
    stored prefix are counted once in the suffix search.
    """
    w = m // 8
    step2 = keys = step3 = 0.0
    for s in range(w):
        q = prob_shared_prefix_bytes(s, n) if n >= 2 else float(s == 0)
        if q == 0:
            continue
        L = min(s + 1 + (suffix_bits // 8 if variant == "real" else 0), w)
        pi = 2.0 ** (-8 * L)
        completions = 2.0 ** (8 * (w - L))
        if variant == "hash" and L < w:
            pi *= 2.0 ** -hash_bits
            ext = (completions * 2.0 ** -hash_bits + 1) / 2
        else:
            ext = (completions + 1) / 2
        hits = n * q * pi  # per guess
        step2 += hits * (w - L + 2)
        if 8 * L < min_prefix_bits:
            continue
        if guesses is None:
            kept = hits
        else:
            kept = n * q * -math.expm1(guesses * math.log1p(-pi)) / guesses
        keys += kept
        step3 += kept * ext
    per_guess = {"step1": 1.0, "step2": step2, "step3": step3, "keys": keys}
    qpk = (1 + step2 + step3) / keys if keys else math.inf
    out = {"per_guess": per_guess, "queries_per_key": qpk,
           "brute_force": brute_force_expected_queries(n, m)}
    if guesses is not None:
        out["expected_keys"] = keys * guesses
    out["reduction"] = out["brute_force"] / qpk if keys else 0.0
    return out


@dataclass(frozen=True)
class PbfAttackParams:
    n: int
    m: int
    l: int
    p: int
    eps: float

    def __post_init__(self):
        if not 1 <= self.p <= self.n:
            raise ValueError("need 1 <= p <= n")
        if not 0 <= self.eps < 1:
            raise ValueError("need 0 <= eps < 1")
        if not 0 < self.l < self.m:
            raise ValueError("need 0 < l < m")


def pbf_cost_ratio(pp: PbfAttackParams) -> tuple[float, float, float]:
    """(attack cost per key, brute-force cost per key, their ratio).

    Brute force here is the 2^(m-1)/n half-space search the ratio is
    stated against.
    """
    cp = (1 + pp.eps * 2.0 ** pp.l / pp.p) * 2.0 ** (pp.m - pp.l - 1)
    cb = 2.0 ** (pp.m - 1) / pp.n
    return cp, cb, cp / cb


def pbf_attack_wins(pp: PbfAttackParams) -> bool:
    return pp.n / 2.0 ** pp.l < 1 - pp.eps * pp.n / pp.p
