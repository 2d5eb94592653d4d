"""Whole-attack driver: steps 1-3, breadth-first accounting and reports."""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..keyspace import unpack
from ..target import System
from .classifier import IdealizedProber, TimedProber, learn_cutoff
from .pbf import detect_pbf_prefix_len, find_fpk_pbf
from .surf import CandidatePrefix, HashContext, extend_prefix, find_fpk_surf, id_prefix_many

log = logging.getLogger("siphon.attack")

TIMED, IDEALIZED = "timed", "idealized"


@dataclass
class AttackConfig:
    filter_kind: str = "surf-real"
    mode: str = IDEALIZED
    fpk_guesses: int = 1 << 20
    min_prefix_bits: int = 40
    max_suffix_search: int | None = None
    seed: int = 0
    key_bits: int | None = None
    samples_per_key: int = 4
    calibration_probes: int = 1_000_000
    pbf_prefix_len: int | None = None
    pbf_detect_probes: int = 100_000
    pbf_detect_margin: float = 3.0
    batch_size: int = 1 << 20

    def validate(self, key_bits: int) -> "AttackConfig":
        if self.mode not in (TIMED, IDEALIZED):
            raise ValueError(f"unknown attack mode {self.mode!r}")
        if self.fpk_guesses < 0:
            raise ValueError("fpk_guesses must be >= 0")
        if self.min_prefix_bits > key_bits:
            raise ValueError("min_prefix_bits exceeds the key length")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "AttackConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown attack config fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class AttackReport:
    config: dict
    step1: int = 0
    step2: int = 0
    step3: int = 0
    wasted: int = 0
    detection: int = 0
    calibration: int = 0
    cutoff_us: float | None = None
    detected_prefix_bits: int | None = None
    false_positives_found: int = 0
    rounds_abandoned: int = 0
    prefixes_discarded: int = 0
    prefixes_kept: int = 0
    hash_trials: int = 0
    step3_enumerated: int = 0
    keys_extracted: list = field(default_factory=list)
    series: list = field(default_factory=list)
    progress: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    @property
    def total_queries(self) -> int:
        return self.detection + self.step1 + self.step2 + self.step3 + self.wasted

    @property
    def queries_per_key(self) -> float:
        return self.total_queries / len(self.keys_extracted) if self.keys_extracted else float("inf")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["keys_extracted"] = [k.hex() for k in self.keys_extracted]
        d["total_queries"] = self.total_queries
        d["queries_per_key"] = None if not self.keys_extracted else self.queries_per_key
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def series_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["total_queries", "keys_extracted"])
        w.writerows(self.series)
        return buf.getvalue()

    def progress_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "iteration", "queries", "positives"])
        w.writerows(self.progress)
        return buf.getvalue()

    def write(self, outdir: str | Path, stem: str = "attack") -> None:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{stem}.json").write_text(self.to_json())
        (out / f"{stem}_series.csv").write_text(self.series_csv())
        (out / f"{stem}_progress.csv").write_text(self.progress_csv())

    def amortized_at(self, fraction: float) -> float:
        """Queries per key at ``fraction`` of the way from the first extraction to the end."""
        pts = [(q, k) for q, k in self.series if k > 0]
        if not pts:
            return float("inf")
        t0, t1 = pts[0][0], self.total_queries
        t = t0 + fraction * (t1 - t0)
        keys = max(k for q, k in pts if q <= t)
        return t / keys


def breadth_first_hits(q: np.ndarray, found: np.ndarray) -> np.ndarray:
    """Global query index at which each round's last query lands.

    Rounds ``0..r-1`` issue one query per iteration in index order until
    round ``i`` has issued ``q[i]``. Returns, for every round, the position
    (1-based) of its final query in that interleaving; only meaningful where
    ``found``.
    """
    q = np.asarray(q, dtype=np.int64)
    r = q.size
    if r == 0:
        return np.zeros(0, dtype=np.int64)
    qs = np.sort(q)
    csum = np.concatenate([[0], np.cumsum(qs)])
    out = np.zeros(r, dtype=np.int64)
    # sum_j min(q_j, t-1): rounds shorter than t-1 contribute fully
    for i in np.flatnonzero(found).tolist():
        t = int(q[i])
        k = np.searchsorted(qs, t - 1, side="right")
        before = int(csum[k]) + (r - k) * (t - 1)
        earlier = int((q[:i] >= t).sum())
        out[i] = before + earlier + 1
    return out


def _prober(sys: System, cfg: AttackConfig, report: AttackReport, key_bits: int):
    if cfg.mode == IDEALIZED:
        return IdealizedProber(sys)
    before = sys.queries
    cls = learn_cutoff(sys, cfg.calibration_probes, cfg.seed, key_bits,
                       samples_per_key=cfg.samples_per_key)
    report.calibration = sys.queries - before
    report.cutoff_us = cls.cutoff_us
    return TimedProber(sys, cls, cfg.seed, cfg.batch_size)


def _log(report: AttackReport, step: int, iteration: int, queries: int, positives: int):
    report.progress.append((step, iteration, queries, positives))
    log.info("%d,%d,%d,%d", step, iteration, queries, positives)


def run_attack(sys: System, cfg: AttackConfig) -> AttackReport:
    """Run the full attack against ``sys`` and account every query."""
    key_bits = cfg.key_bits or sys.dataset.key_len_bits
    cfg.validate(key_bits)
    width = key_bits // 8
    report = AttackReport(config=asdict(cfg))
    prober = _prober(sys, cfg, report, key_bits)
    hc = None
    if cfg.filter_kind == "pbf":
        plen = cfg.pbf_prefix_len
        if plen is None:
            det = detect_pbf_prefix_len(prober, key_bits, cfg.pbf_detect_probes,
                                        margin=cfg.pbf_detect_margin, seed=cfg.seed)
            plen = det.length_bits
            report.detection = det.queries
        report.detected_prefix_bits = plen
        before = prober.queries
        pos = find_fpk_pbf(prober, plen, cfg.fpk_guesses, cfg.seed, cfg.batch_size)
        report.step1 = prober.queries - before
        report.false_positives_found = int(pos.size)
        _log(report, 1, 0, report.step1, int(pos.size))
        lens = np.full(pos.size, plen // 8, dtype=np.int64)
        step2_q = np.zeros(pos.size, dtype=np.int64)
        kappas = pos
        kappa_width = plen // 8
    else:
        if cfg.filter_kind == "surf-hash":
            hc = HashContext.for_system(sys)
        before = prober.queries
        kappas = find_fpk_surf(prober, cfg.fpk_guesses, key_bits, cfg.seed, cfg.batch_size)
        report.step1 = prober.queries - before
        report.false_positives_found = int(kappas.size)
        _log(report, 1, 0, report.step1, int(kappas.size))
        idp = id_prefix_many(prober, kappas, width, hc, cfg.seed)
        for it, q, p in idp.iterations:
            _log(report, 2, it, q, p)
        lens, step2_q = idp.prefix_len, idp.queries
        report.hash_trials = idp.hash_trials
        report.rounds_abandoned = int((lens < 0).sum())
        kappa_width = width

    # keep prefixes that are long enough, one round per distinct prefix
    keep = lens * 8 >= cfg.min_prefix_bits
    report.prefixes_discarded = int(((lens >= 0) & ~keep).sum())
    report.step2 = int(step2_q[keep].sum())
    report.wasted = int(step2_q[~keep].sum())
    prefixes: dict[bytes, CandidatePrefix] = {}
    for k, L in zip(kappas[keep].tolist(), lens[keep].tolist()):
        kb = unpack(k, kappa_width)
        if kb[:L] not in prefixes:
            constraint = None
            if hc is not None:
                constraint = int(hc.of(np.array([k], dtype=np.uint64), width)[0])
            prefixes[kb[:L]] = CandidatePrefix(kb[:L], kb, constraint)
    report.prefixes_kept = len(prefixes)

    cands = list(prefixes.values())
    q = np.zeros(len(cands), dtype=np.int64)
    found = np.zeros(len(cands), dtype=bool)
    keys: list = [None] * len(cands)
    for i, pfx in enumerate(cands):
        try:
            ext = extend_prefix(sys, pfx, width, cfg.max_suffix_search, hc)
        except ValueError as exc:
            report.errors.append(str(exc))
            continue
        q[i] = ext.queries
        report.step3_enumerated += ext.enumerated
        if ext.key is not None:
            found[i] = True
            keys[i] = ext.key
    report.step3 = int(q[found].sum())
    report.wasted += int(q[~found].sum())

    offset = report.detection + report.step1 + int(step2_q.sum())
    when = breadth_first_hits(q, found)
    order = sorted(np.flatnonzero(found).tolist(), key=lambda i: when[i])
    seen = set()
    report.series = [(offset, 0)]
    for i in order:
        if keys[i] in seen:
            continue
        seen.add(keys[i])
        report.keys_extracted.append(keys[i])
        report.series.append((offset + int(when[i]), len(report.keys_extracted)))
    report.series.append((report.total_queries, len(report.keys_extracted)))
    _log(report, 3, int(q.max()) if q.size else 0, int(q.sum()), len(report.keys_extracted))
    return report
