#!/usr/bin/env python3
"""Train every ablation variant on a synthetic corpus and print the
comparison table with parameter counts.

Usage: python scripts/run_ablation.py [--epochs N] [--positives N]
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from bioie.cli import main as cli_main


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--epochs", type=int, default=10)
    parser.add_argument("--positives", type=int, default=60)
    parser.add_argument("--outdir", default="runs/ablation")
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args()
    return cli_main([
        "ablate",
        "--outdir", args.outdir,
        "--dataset", "synthetic",
        "--synth_counts", f"Size={args.positives}",
        "--seed", str(args.seed),
        "--epochs", str(args.epochs),
        "--patience", "3",
        "--d_w", "24", "--d_p", "8", "--hidden", "16", "--heads", "4",
        "--gcn_layers", "1", "--window", "5", "--batch_size", "16",
        "--dropout", "0.2",
    ])


if __name__ == "__main__":
    sys.exit(main())
