#!/usr/bin/env python3
"""Write the synthetic desk corpus (train/valid/test) to a directory.

The generator is deterministic in --seed; the default sizes give the
~100K-token corpus the experiment scripts and acceptance runs use.
"""

import argparse
from pathlib import Path

from slimlm.synthetic import make_desk_corpus


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True, metavar="DIR")
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--train-tokens", type=int, default=100_000)
    ap.add_argument("--valid-tokens", type=int, default=10_000)
    ap.add_argument("--test-tokens", type=int, default=10_000)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    texts = make_desk_corpus(
        args.seed, args.train_tokens, args.valid_tokens, args.test_tokens
    )
    for name, text in zip(("train", "valid", "test"), texts):
        path = out / f"{name}.txt"
        path.write_text(text, encoding="utf-8")
        tokens = sum(len(line.split()) for line in text.splitlines())
        print(f"wrote {path} ({tokens} word tokens)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
