#!/usr/bin/env python3
"""Train on the conjugate Gaussian-mean benchmark and print the diagnostics."""

import argparse

from graphabi.experiments import run_conjugate


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/conjugate")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--full", action="store_true")
    args = ap.parse_args()
    report, sbc, _ = run_conjugate(args.out, seed=args.seed, full=args.full,
                                   log_every=5)
    print(f"recovery(mu) = {report.recovery[0]:.3f}")
    print(f"contraction(mu) = {report.contraction[0]:.3f}")
    print(f"log_gamma(mu) = {report.log_gamma[0]:.3f}  "
          f"(gamma = {sbc.gamma[0]:.4f}, gamma_bar = {sbc.gamma_bar:.4f})")


if __name__ == "__main__":
    main()
