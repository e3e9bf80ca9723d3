#!/usr/bin/env python3
"""Kernel counts of the selected-inversion DAG against the closed-form GEMM count.

Prints a table for N=6 (dense and bands 1..5) and checks the closed form on a
sweep of (N, B). Exits nonzero on any mismatch.
"""

import argparse
import sys

from tilesel.dagviz import count_kernels, predict_gemm_count, synthetic_dag


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-tiles", type=int, default=6)
    ap.add_argument("--sweep", type=int, default=30, help="largest N of the closed-form sweep")
    args = ap.parse_args(argv)

    N = args.n_tiles
    print(f"{'selection':<14}{'GEMM':>8}{'predicted':>11}{'TRSM_INV':>10}{'TRMM':>6}{'LAUUM':>7}{'crit.path':>11}")
    for B in list(range(1, N)) + [None]:
        r = count_kernels(synthetic_dag(N, B))
        label = "dense" if B is None else f"band B={B}"
        pred = predict_gemm_count(N, N if B is None else B)
        print(f"{label:<14}{r.gemm_actual:>8}{pred:>11}{r.trsm:>10}{r.trmm:>6}{r.lauum:>7}{r.critical_path:>11}")

    bad = [(n, b) for n in range(2, args.sweep + 1) for b in range(1, n)
           if count_kernels(synthetic_dag(n, b)).gemm_actual != predict_gemm_count(n, b)]
    print(f"sweep 1 <= B < N <= {args.sweep}: {'all match' if not bad else f'mismatches {bad}'}")
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
