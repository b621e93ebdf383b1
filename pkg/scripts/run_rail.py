#!/usr/bin/env python3
"""Train the neural travel-time likelihood for the rail scheduling simulator."""

import argparse

from graphabi.experiments import run_rail


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/rail")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--full", action="store_true")
    args = ap.parse_args()
    report, sbc, _ = run_rail(args.out, seed=args.seed, full=args.full,
                              log_every=1)
    for j, name in enumerate(report.parameter_names):
        print(f"{name}: recovery={report.recovery[j]:.3f} "
              f"log_gamma={report.log_gamma[j]:.3f}")


if __name__ == "__main__":
    main()
