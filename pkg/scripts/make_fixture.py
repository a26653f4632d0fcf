#!/usr/bin/env python3
"""Regenerate fixtures/toy: a 30-node synthetic graph, patterns and a fast training config."""

import argparse
import json
import sys
from pathlib import Path

from edgewise.cli import main as cli

CONFIG = {
    "alpha": 1.0, "beta": 1.0, "gamma": 1.0,
    "epochs": 40, "batch_size": 32, "lr": 0.003, "seed": 7, "patience": 10,
    "task": "regression", "folds": 5, "repeats": 2,
    "model": {"token_dim": 8, "tokenizer": "shallow", "head_hidden": [16, 8]},
}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "fixtures" / "toy"))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    code = cli(["make-fixture", "--out", args.out, "--seed", str(args.seed)])
    if code == 0:
        (Path(args.out) / "config.json").write_text(json.dumps(CONFIG, indent=2) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
