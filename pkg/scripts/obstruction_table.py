"""Smoothing orders and tail sums for the Delta^k multiplier on n + c n^-alpha."""

import argparse

from menshov.analysis import smoothing_obstruction

CASES = [(0, 1), (2, 0.5), (0, 2), (1, 1), (0.5, 0.25), (0, 0.3), (3, 1), (1, 0.5)]


def main(n1: int):
    print(f"{'beta':>5} {'alpha':>6} {'k_min':>5} {'tail_bound':>12} {'brute':>12} {'gap':>9}")
    for beta, alpha in CASES:
        r = smoothing_obstruction(beta, alpha, n1=n1)
        print(f"{beta:>5} {alpha:>6} {r.minimal_k:>5} {r.tail_bound_finite:>12.4e} "
              f"{r.brute_force:>12.4e} {r.relative_gap:>9.2e}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n1", type=int, default=10 ** 6)
    main(ap.parse_args().n1)
