#!/usr/bin/env python3
"""Reproduce the desk-scale experiment suite end to end.

Runs, via the slimlm CLI:
  1. input compression-ratio sweep {1, 1/8, 1/64} at K=8, 5 epochs each
     (perplexity should stay in a narrow band),
  2. sub-vector-count sweep K in {1, 4, 8} at constant ratio 1/8,
     10 epochs each (K=1 should come out worst),
  3. the output-layer timing benchmark at V=50000, H=512
     (two-step pooled evaluation < dense < hashing on the fly).

Everything lands under --out; pass --skip-bench on very slow machines.
Expect roughly 15 minutes of CPU time for the training runs.
"""

import argparse
import sys
from pathlib import Path

from slimlm.cli import main as slimlm
from slimlm.synthetic import make_desk_corpus


def run(args: list[str]) -> None:
    print(f"\n$ slimlm {' '.join(args)}", flush=True)
    rc = slimlm(args)
    if rc != 0:
        sys.exit(f"step failed with exit code {rc}")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True, metavar="DIR")
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--skip-bench", action="store_true")
    args = ap.parse_args()

    out = Path(args.out)
    corpus = out / "corpus"
    corpus.mkdir(parents=True, exist_ok=True)
    for name, text in zip(
        ("train", "valid", "test"), make_desk_corpus(args.seed)
    ):
        (corpus / f"{name}.txt").write_text(text, encoding="utf-8")
    print(f"corpus written to {corpus}")

    shared = [
        "--train", str(corpus / "train.txt"),
        "--valid", str(corpus / "valid.txt"),
        "--test", str(corpus / "test.txt"),
        "--hidden", "128", "--layers", "2", "--k-in", "8",
        "--batch", "20", "--bptt", "35", "--lr", "1.0", "--seed", "21",
    ]

    # 1. compression-ratio sweep: M = K*V, V, V/8 -> ratios 1, 1/8, 1/64
    run([
        "sweep", *shared, "--max-epochs", "5",
        "--vary", "m_in", "--values", "8192,1024,128",
        "--out", str(out / "ratio_sweep"),
    ])

    # 2. K sweep at constant ratio 1/8: (K, M) = (1, 128), (4, 512), (8, 1024)
    for k, m in ((1, 128), (4, 512), (8, 1024)):
        run([
            "train", *shared, "--max-epochs", "10",
            "--k-in", str(k), "--m-in", str(m),
            "--out", str(out / "k_sweep" / f"k_{k}"),
        ])

    if not args.skip_bench:
        run([
            "bench", "--vocab-size", "50000", "--hidden", "512",
            "--k", "8", "--m", "4096",
            "--out", str(out / "bench.csv"),
        ])

    print("\nartifacts:")
    print(f"  {out / 'ratio_sweep' / 'sweep.csv'}  (PPL vs compression ratio)")
    print(f"  {out / 'k_sweep'}/k_*/train_log.csv  (PPL vs K at ratio 1/8)")
    if not args.skip_bench:
        print(f"  {out / 'bench.csv'}  (output-layer timings)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
