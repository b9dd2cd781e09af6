#!/usr/bin/env python3
"""Boundary- and internal-layer experiments: fields (VTK), the x=0.5
cross-section, and oscillation metrics against a refined reference."""

import argparse

from magadv.app import RunConfig, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--N", type=int, default=16)
    ap.add_argument("--out", default="results/layers")
    args = ap.parse_args()

    out4 = run_experiment(RunConfig(example=4, k=1, N=(args.N,), eps=1e-6,
                                    out=args.out, verbose=True))
    print("boundary layer metrics:", out4["metrics"])
    out5 = run_experiment(RunConfig(example=5, k=1, N=(args.N,),
                                    out=args.out, verbose=True))
    print("internal layer metrics:", out5["metrics"])


if __name__ == "__main__":
    main()
