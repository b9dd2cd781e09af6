#!/usr/bin/env python3
"""2D smooth-solution convergence tables (stabilized vs unstabilized).

Writes one CSV per (k, variant) under results/convergence_2d/.
"""

import argparse

from magadv.app import RunConfig, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--eps", type=float, default=1e-6)
    ap.add_argument("--out", default="results/convergence_2d")
    args = ap.parse_args()

    for k, ns in ((1, (8, 16, 32, 64, 128)), (2, (8, 16, 32, 64))):
        for variant in ("supg", "none"):
            cfg = RunConfig(example=2, k=k, N=ns, eps=args.eps, variant=variant,
                            out=args.out, verbose=True)
            result = run_experiment(cfg)
            print("wrote", result["csv"][0])


if __name__ == "__main__":
    main()
