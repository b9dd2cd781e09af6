#!/usr/bin/env python3
"""Role of the two stabilization pieces: full, residual-only (centered facet
weights), and jump-penalty-only sweeps on the smooth 2D problem, k=2."""

import argparse

from magadv.app import RunConfig, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dim", type=int, default=2, choices=(2, 3))
    ap.add_argument("--eps", type=float, default=1e-6)
    ap.add_argument("--out", default="results/stabilization_split")
    args = ap.parse_args()

    ns = (8, 16, 32, 64) if args.dim == 2 else (2, 4, 8)
    cfg = RunConfig(example=3, dim=args.dim, k=2, N=ns, eps=args.eps,
                    out=args.out, verbose=True)
    result = run_experiment(cfg)
    for path in result["csv"]:
        print("wrote", path)


if __name__ == "__main__":
    main()
