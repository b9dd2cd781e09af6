#!/usr/bin/env python3
"""3D smooth-solution convergence tables. The k=2 sweep is heavy (minutes)."""

import argparse

from magadv.app import RunConfig, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--eps", type=float, default=1e-6)
    ap.add_argument("--k", type=int, default=1, choices=(1, 2))
    ap.add_argument("--out", default="results/convergence_3d")
    args = ap.parse_args()

    ns = (2, 4, 8, 16) if args.k == 1 else (2, 4, 8)
    for variant in ("supg", "none"):
        cfg = RunConfig(example=1, k=args.k, N=ns, eps=args.eps, variant=variant,
                        out=args.out, verbose=True)
        result = run_experiment(cfg)
        print("wrote", result["csv"][0])


if __name__ == "__main__":
    main()
