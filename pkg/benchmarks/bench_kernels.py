"""Timing comparison: compiled kernels vs the pure-NumPy fallback.

Runs the two hot kernels (personalized-PageRank power series and induced
adjacency block gather) over a planted-partition workload and prints a
small table. Usage:

    python3 benchmarks/bench_kernels.py [--nodes-per-class N] [--repeats R]
"""

import argparse
import time

import numpy as np

from cosmic._kernels import _fallback
from cosmic.graph import column_normalize, generate_planted_partition

try:
    from cosmic._kernels import _core
except ImportError:
    _core = None


def bench(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes-per-class", type=int, default=100)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    g = generate_planted_partition(10, args.nodes_per_class, 0.2, 0.02,
                                   32, 0.5, seed=0)
    adj = g.adjacency
    mat = column_normalize(g)   # the kernels expect the PPR operator
    indptr = mat.indptr.astype(np.int64)
    indices = mat.indices.astype(np.int64)
    data = mat.data.astype(np.float64)
    n = g.num_nodes
    rng = np.random.default_rng(0)
    seeds = rng.integers(0, n, size=200)
    blocks = [np.sort(rng.choice(n, size=11, replace=False))
              for _ in range(500)]

    impls = [("fallback", _fallback)]
    if _core is not None:
        impls.append(("compiled", _core))
    else:
        print("compiled extension not importable; timing fallback only")

    print(f"graph: {n} nodes, {adj.nnz // 2} edges; "
          f"{len(seeds)} ppr seeds, {len(blocks)} block gathers")
    print(f"{'kernel':<14} {'impl':<10} {'best of ' + str(args.repeats):>12}")

    results = {}
    for name, impl in impls:
        def run_ppr(impl=impl):
            for s in seeds:
                impl.ppr_scores(indptr, indices, data, n, int(s),
                                0.15, 1e-8, 1000)

        def run_blocks(impl=impl):
            out = np.zeros((11, 11))
            for sel in blocks:
                impl.induced_block(indptr, indices, data, sel, out)

        for kernel, fn in (("ppr_scores", run_ppr),
                           ("induced_block", run_blocks)):
            t = bench(fn, args.repeats)
            results[(kernel, name)] = t
            print(f"{kernel:<14} {name:<10} {t * 1000:>10.2f}ms")

    if _core is not None:
        for kernel in ("ppr_scores", "induced_block"):
            ratio = results[(kernel, "fallback")] / results[(kernel, "compiled")]
            print(f"{kernel}: compiled is {ratio:.1f}x the fallback")


if __name__ == "__main__":
    main()
