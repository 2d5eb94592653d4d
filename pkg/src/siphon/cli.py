"""Command-line experiment runner.

Every subcommand reads an optional JSON experiment file (``--config``)
with sections ``dataset``, ``filter``, ``system``, ``attack`` and
``output``; command-line flags override individual fields. Results go to
stdout or ``--out`` as CSV/JSON. Failures print a JSON object to stderr
and exit with status 1.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .attack import AttackConfig, run_attack
from .filters import (KINDS, FilterConfig, build, exact_surf_fpr, false_positive_keys,
                      filter_stats, random_non_members)
from .keyspace import generate_uniform, load_dataset, save_dataset
from .store import load_store
from .target import System, SystemConfig, latency_histogram


class CliError(Exception):
    pass


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc


def _overlay(base: dict, **flags) -> dict:
    out = dict(base)
    out.update({k: v for k, v in flags.items() if v is not None})
    return out


def _dataset(args, cfg: dict):
    ds = _overlay(cfg.get("dataset", {}), path=args.dataset, n=args.n, m=args.m, seed=args.seed)
    if ds.get("path"):
        return load_dataset(ds["path"])
    if ds.get("n") is None or ds.get("m") is None:
        raise CliError("need --dataset or both --n and --m")
    return generate_uniform(int(ds["n"]), int(ds["m"]), int(ds.get("seed", 0)))


def _filter_cfg(args, cfg: dict) -> FilterConfig:
    fc = _overlay(cfg.get("filter", {}), kind=getattr(args, "kind", None),
                  bits_per_key=getattr(args, "bits_per_key", None),
                  pbf_prefix_len=getattr(args, "pbf_prefix_len", None))
    return FilterConfig.from_dict(fc)


def _system_cfg(args, cfg: dict) -> SystemConfig:
    sc = dict(cfg.get("system", {}))
    if getattr(args, "acl_mode", None):
        sc["acl_mode"] = args.acl_mode
    if getattr(args, "eviction_ops", None) is not None:
        sc["eviction_ops"] = args.eviction_ops
    return SystemConfig.from_dict(sc)


def _emit(text: str, out: str | None) -> None:
    if out:
        try:
            Path(out).write_text(text)
        except OSError as exc:
            raise CliError(f"cannot write {out}: {exc}") from exc
    else:
        sys.stdout.write(text)


def _csv(header: list[str], rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _sci(x: float) -> str:
    return f"{x:.6e}"


# -- subcommands --------------------------------------------------------------

def cmd_gen(args, cfg):
    d = _dataset(args, cfg)
    if not args.out:
        raise CliError("gen needs --out")
    try:
        save_dataset(d, args.out)
    except OSError as exc:
        raise CliError(f"cannot write {args.out}: {exc}") from exc
    print(json.dumps({"keys": len(d), "m": d.key_len_bits, "out": args.out}))


def cmd_build(args, cfg):
    d = _dataset(args, cfg)
    sc = _system_cfg(args, cfg)
    store = load_store(d, _filter_cfg(args, cfg), acl_fraction=sc.acl_fraction, seed=sc.seed,
                       memtable_limit=sc.memtable_limit, sstable_capacity=sc.sstable_capacity,
                       block_entries=sc.block_entries)
    stats = store.stats()
    stats["filters"] = [filter_stats(s.filter) for s in store.sstables()]
    _emit(json.dumps(stats, indent=2, sort_keys=True) + "\n", args.out)


def cmd_fpr(args, cfg):
    if args.probes < 1:
        raise CliError("fpr needs at least one probe")
    d = _dataset(args, cfg)
    base = cfg.get("filter", {})
    kinds = args.kinds.split(",") if args.kinds else [base.get("kind", "surf-real")]
    rows = []
    probes = random_non_members(d, args.probes, args.probe_seed)
    for kind in kinds:
        fc = _overlay(base, kind=kind, bits_per_key=args.bits_per_key,
                      pbf_prefix_len=args.pbf_prefix_len)
        if kind == "pbf" and fc.get("pbf_prefix_len") is None:
            fc["pbf_prefix_len"] = d.key_len_bits // 2
        f = build(d, FilterConfig.from_dict(fc))
        fpr = float(f.contains_many(probes, d.width).mean())
        if kind.startswith("surf"):
            exact = exact_surf_fpr(d, f.variant, f.suffix_bits or 8, f.hash_bits or 8)
        elif kind == "bloom":
            exact = f.expected_fpr()
        else:
            exact = f.bloom.expected_fpr()
        rows.append([kind, f"{f.size_bits() / len(d):.3f}", _sci(fpr), _sci(exact), args.probes])
    _emit(_csv(["filter_kind", "bits_per_key", "fpr", "expected_fpr", "probes"], rows), args.out)


def cmd_timing_hist(args, cfg):
    d = _dataset(args, cfg)
    system = System.build(d, _filter_cfg(args, cfg), _system_cfg(args, cfg))
    rng = np.random.default_rng(args.probe_seed)
    parts, labels = [], []
    if args.probes:
        keys = rng.integers(0, 2**64, args.probes, dtype=np.uint64) >> np.uint64(64 - d.key_len_bits)
        parts.append(system.system_get_many(keys, d.width)[1])
        labels.append(np.zeros(args.probes, dtype=bool))
    if args.labeled_fp:
        fps = false_positive_keys(system.store.sstables()[0].filter, args.labeled_fp,
                                  args.probe_seed)
        system.wait_for_eviction()
        parts.append(system.system_get_many(fps, d.width)[1])
        labels.append(np.ones(fps.size, dtype=bool))
    lat = np.concatenate(parts) if parts else np.zeros(0)
    fp = np.concatenate(labels) if labels else None
    rows = latency_histogram(lat, args.bucket_us, fp if args.labeled_fp else None)
    header = ["bucket_lo_us", "bucket_hi_us", "count"] + (["fp_count"] if args.labeled_fp else [])
    _emit(_csv(header, [[r[h] for h in header] for r in rows]), args.out)


def cmd_attack(args, cfg):
    d = _dataset(args, cfg)
    fcfg = _filter_cfg(args, cfg)
    ac = _overlay(cfg.get("attack", {}), mode=args.mode, fpk_guesses=args.guesses,
                  min_prefix_bits=args.min_prefix_bits, max_suffix_search=args.budget)
    ac.setdefault("filter_kind", fcfg.kind)
    outdir = args.outdir or cfg.get("output")
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [ac.get("seed", 0)]
    rows = []
    for seed in seeds:
        acfg = AttackConfig.from_dict({**ac, "seed": seed})
        scfg = _system_cfg(args, cfg)
        if acfg.mode == "idealized":
            scfg.idealized = True
        report = run_attack(System.build(d, fcfg, scfg), acfg)
        members = set(d)
        sound = all(k in members for k in report.keys_extracted)
        if outdir:
            report.write(outdir, f"attack_seed{seed}")
        rows.append([seed, acfg.mode, report.step1, report.step2, report.step3, report.wasted,
                     report.total_queries, len(report.keys_extracted),
                     f"{report.queries_per_key:.3f}", int(sound)])
    _emit(_csv(["seed", "mode", "step1", "step2", "step3", "wasted", "total_queries",
                "keys_extracted", "queries_per_key", "verified"], rows), args.out)


def cmd_analyze(args, cfg):
    if args.pbf:
        if None in (args.n, args.m, args.l, args.p, args.eps):
            raise CliError("--pbf needs --n --m --l --p --eps")
        cp, cb, ratio = analysis.pbf_cost_ratio(
            analysis.PbfAttackParams(args.n, args.m, args.l, args.p, args.eps))
        _emit(_csv(["n", "m", "l", "p", "eps", "attack_cost", "brute_cost", "ratio"],
                   [[args.n, args.m, args.l, args.p, _sci(args.eps), _sci(cp), _sci(cb),
                     _sci(ratio)]]), args.out)
        return
    if args.n is not None and args.m is not None:
        rows = []
        if args.l is not None:
            pp = analysis.SurfAttackParams(args.n, args.m, args.l, args.variant)
            rows.append(["surf", args.variant, args.n, args.m, args.l,
                         _sci(analysis.exploitable_guess_prob(pp)),
                         _sci(analysis.reduction_factor(pp)),
                         _sci(analysis.brute_force_expected_queries(args.n, args.m))])
        else:
            pred = analysis.predict_attack(args.n, args.m, args.variant, args.min_prefix_bits,
                                           args.guesses)
            rows.append(["attack", args.variant, args.n, args.m, "",
                         _sci(pred["per_guess"]["keys"]), _sci(pred["reduction"]),
                         _sci(pred["brute_force"])])
        _emit(_csv(["what", "variant", "n", "m", "l", "p_star", "reduction", "brute_force"],
                   rows), args.out)
        return
    rows = [["" if r["l"] is None else r["l"], r["n"], _sci(r["p_star"]), _sci(r["reduction"])]
            for r in analysis.predict_table1(args.variant)]
    _emit(_csv(["l", "n", "p_star", "reduction"], rows), args.out)


def cmd_report(args, cfg):
    rows = []
    for path in args.reports:
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read report {path}: {exc}") from exc
        total = d["total_queries"] or 1
        for step in ("step1", "step2", "step3", "wasted"):
            rows.append([path, step, d[step], f"{100 * d[step] / total:.2f}"])
        rows.append([path, "total", d["total_queries"], "100.00"])
    _emit(_csv(["report", "stage", "queries", "percent"], rows), args.out)


# -- parser -------------------------------------------------------------------

def _dataset_args(p):
    p.add_argument("--dataset", help="dataset file written by 'gen'")
    p.add_argument("--n", type=int, help="number of keys to generate")
    p.add_argument("--m", type=int, help="key length in bits")
    p.add_argument("--seed", type=int, help="dataset seed")


def _filter_args(p):
    p.add_argument("--kind", choices=KINDS)
    p.add_argument("--bits-per-key", type=float)
    p.add_argument("--pbf-prefix-len", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="siphon", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON experiment file")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log attack progress lines (step,iteration,queries,positives)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a uniform dataset")
    _dataset_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("build", help="build a store and print its stats")
    _dataset_args(p)
    _filter_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("fpr", help="measure filter false-positive rates")
    _dataset_args(p)
    p.add_argument("--kinds", help="comma-separated filter kinds")
    p.add_argument("--bits-per-key", type=float)
    p.add_argument("--pbf-prefix-len", type=int)
    p.add_argument("--probes", type=int, default=1_000_000)
    p.add_argument("--probe-seed", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fpr)

    p = sub.add_parser("timing-hist", help="response-time histogram")
    _dataset_args(p)
    _filter_args(p)
    p.add_argument("--probes", type=int, default=100_000)
    p.add_argument("--labeled-fp", type=int, default=0, help="extra known false-positive probes")
    p.add_argument("--bucket-us", type=float, default=5.0)
    p.add_argument("--probe-seed", type=int, default=1)
    p.add_argument("--acl-mode", choices=("distinguishing", "non_distinguishing"))
    p.add_argument("--eviction-ops", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_timing_hist)

    p = sub.add_parser("attack", help="run the key-extraction attack")
    _dataset_args(p)
    _filter_args(p)
    p.add_argument("--mode", choices=("timed", "idealized"))
    p.add_argument("--guesses", type=int)
    p.add_argument("--min-prefix-bits", type=int)
    p.add_argument("--budget", type=int, help="per-prefix suffix-search query budget")
    p.add_argument("--seeds", help="comma-separated attack seeds")
    p.add_argument("--acl-mode", choices=("distinguishing", "non_distinguishing"))
    p.add_argument("--eviction-ops", type=int)
    p.add_argument("--outdir", help="directory for JSON/CSV reports")
    p.add_argument("--out")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("analyze", help="closed-form predictions as CSV")
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--l", type=int)
    p.add_argument("--variant", choices=("base", "real", "hash"), default="real")
    p.add_argument("--min-prefix-bits", type=int, default=40)
    p.add_argument("--guesses", type=int)
    p.add_argument("--pbf", action="store_true")
    p.add_argument("--p", type=int, help="distinct stored prefixes (PBF)")
    p.add_argument("--eps", type=float, help="Bloom false-positive rate (PBF)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("report", help="per-stage query breakdown of attack reports")
    p.add_argument("reports", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        cfg = _load_config(args.config)
        args.func(args, cfg)
    except (CliError, ValueError, KeyError, RuntimeError, OSError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc),
                                     "command": args.command}) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
