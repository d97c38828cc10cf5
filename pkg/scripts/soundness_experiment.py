"""Empirical acceptance rate of a cheating prover against the (1-f)^k bound.

    python3 scripts/soundness_experiment.py [--trials 400]
"""

import argparse

from scipy.stats import binom

from zkmark.soundness import run_trials


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=400)
    ap.add_argument("--m", type=int, default=64)
    args = ap.parse_args()
    print(f"{'violated':>8} {'k':>5} {'rate':>7} {'bound':>7}  99% CI")
    for violated, k in ((1, 16), (1, 64), (1, 512), (16, 16), (16, 64), (32, 8)):
        res = run_trials(args.m, violated, k, args.trials)
        lo, hi = binom.interval(0.99, args.trials, res.bound)
        inside = "ok" if lo <= res.accepted <= hi else "OUTSIDE"
        print(f"{violated:>8} {k:>5} {res.rate:7.4f} {res.bound:7.4f}  [{lo / args.trials:.4f}, {hi / args.trials:.4f}] {inside}")


if __name__ == "__main__":
    main()
