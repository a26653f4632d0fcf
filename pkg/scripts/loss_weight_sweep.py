#!/usr/bin/env python3
"""Sweep the self-supervised loss weights on the synthetic task.

For each (beta, gamma) in the grid, train with alpha=1 and report train MAE
and the cosine/target Pearson correlation.
"""

import argparse
import itertools
import sys

from edgewise.experiments import SYNTHETIC_CONFIG, synthetic_fit


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--weights", type=float, nargs="+", default=[0.0, 0.5, 1.0])
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    print("beta\tgamma\tmae\tpearson\tseconds")
    for beta, gamma in itertools.product(args.weights, repeat=2):
        cfg = SYNTHETIC_CONFIG.replace(beta=beta, gamma=gamma, epochs=args.epochs, seed=args.seed)
        r = synthetic_fit(cfg)
        print(f"{beta}\t{gamma}\t{r.final_mae:.4f}\t{r.pearson_cosine:.4f}\t{r.seconds:.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
