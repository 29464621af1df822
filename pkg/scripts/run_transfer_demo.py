#!/usr/bin/env python3
"""Cross-corpus transfer demo: two synthetic corpora with different
templates, trained and fine-tuned in both directions.

Usage: python scripts/run_transfer_demo.py [--outdir DIR]
"""

import argparse
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from bioie.cli import main as cli_main


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--outdir", default="runs/transfer")
    parser.add_argument("--epochs", type=int, default=8)
    args = parser.parse_args()
    out = Path(args.outdir)

    shared = ["--d_w", "24", "--d_p", "8", "--hidden", "16", "--heads", "4",
              "--gcn_layers", "1", "--window", "5", "--batch_size", "16",
              "--dropout", "0.2"]
    code = cli_main(["synth", "--outdir", str(out / "corpus_a"),
                     "--synth_counts", "Size=60", "--seed", "1",
                     "--synth_style", "a"])
    code |= cli_main(["synth", "--outdir", str(out / "corpus_b"),
                      "--synth_counts", "Size=60", "--seed", "2",
                      "--synth_style", "b"])
    if code:
        return code
    return cli_main([
        "transfer",
        "--outdir", str(out),
        "--dataset", "synthetic",
        "--data", str(out / "corpus_a" / "records.jsonl"),
        "--target_data", str(out / "corpus_b" / "records.jsonl"),
        "--epochs", str(args.epochs),
        "--patience", "3",
        "--seed", "0",
    ] + shared)


if __name__ == "__main__":
    sys.exit(main())
