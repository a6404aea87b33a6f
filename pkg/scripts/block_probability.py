"""Monte Carlo block-condition probability against the product formula, for k = 2..k_max."""

import argparse

from menshov.spectrum import (PerturbationLaw, analytic_block_probability,
                              estimate_block_probability, load_profile)


def main(k_max: int, trials: int, seed: int, profile: str):
    prof = load_profile(profile)
    law = PerturbationLaw()
    print(f"{'k':>3} {'p_hat':>12} {'stderr':>10} {'analytic':>12} {'z':>6}")
    for k in range(2, k_max + 1):
        est = estimate_block_probability(k, prof, law, trials, seed)
        a = analytic_block_probability(k, prof, law)
        z = abs(est.p_hat - a) / est.stderr if est.stderr else float("nan")
        print(f"{k:>3} {est.p_hat:>12.4e} {est.stderr:>10.2e} {a:>12.4e} {z:>6.2f}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--k-max", type=int, default=3)
    ap.add_argument("--trials", type=int, default=10 ** 6)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--profile", default="default")
    a = ap.parse_args()
    main(a.k_max, a.trials, a.seed, a.profile)
