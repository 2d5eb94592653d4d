"""Time the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--n N] [--repeat R] [--out results.csv]
"""
import argparse
import csv
import sys
import timeit

import numpy as np

from siphon import kernels
from siphon.keyspace import generate_uniform


def cases(n: int, rng: np.random.Generator):
    d = generate_uniform(n, 64, seed=1)
    q = rng.integers(0, 2**64, n, dtype=np.uint64)
    thresh = rng.integers(1, 9, n).astype(np.uint8)
    nbits = np.uint64(18 * n)
    bits = np.zeros(-(-int(nbits) // 8), dtype=np.uint8)

    def make(k):
        hashes = k.hash_keys(q, 8, 3)
        k.bloom_insert(bits, nbits, hashes, 6)
        sh = k.hash_keys(d.packed, 8, 3)
        return {
            "mix64": lambda: k.mix64(q),
            "hash_keys": lambda: k.hash_keys(q, 8, 3),
            "bloom_insert": lambda: k.bloom_insert(bits.copy(), nbits, hashes, 6),
            "bloom_query": lambda: k.bloom_query(bits, nbits, hashes, 6),
            "lcp_bytes": lambda: k.lcp_bytes(q, d.packed, 8),
            "neighbor_lcp": lambda: k.neighbor_lcp(d.packed, 8),
            "surf_probe": lambda: k.surf_probe(d.packed, thresh, sh, 15, q, hashes, 8),
        }
    return make


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1 << 20, help="keys per call")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--out", help="write CSV here instead of stdout")
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled backend not built; timing numpy only", file=sys.stderr)
    make = cases(args.n, np.random.default_rng(0))
    timings = {}
    for name in backends:
        for op, fn in make(kernels.get_backend(name)).items():
            fn()  # warm up
            best = min(timeit.repeat(fn, number=1, repeat=args.repeat))
            timings[(op, name)] = best

    rows = []
    for op in kernels._FUNCS:
        row = {"kernel": op, "n": args.n}
        for name in ("cython", "numpy"):
            t = timings.get((op, name))
            row[f"{name}_ms"] = "" if t is None else f"{1e3 * t:.3f}"
        if ("cython", "numpy") == tuple(sorted(backends)):
            row["speedup"] = f"{timings[(op, 'numpy')] / timings[(op, 'cython')]:.2f}"
        else:
            row["speedup"] = ""
        rows.append(row)

    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.DictWriter(fh, fieldnames=["kernel", "n", "cython_ms", "numpy_ms", "speedup"],
                       lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    if args.out:
        fh.close()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
