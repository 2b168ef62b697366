"""Command-line entry point.

Subcommands:
  train   fit a model, writing vocab, mappings, CSV log, effective.cfg,
          and the best checkpoint into --out
  eval    score a corpus with a checkpoint, printing `ppl=<value>`
  sweep   train one model per value of a varied size parameter, collecting
          a combined CSV
  bench   time the output-layer variants and emit a CSV
  map     generate or inspect mapping files

Flag values override config-file values; the merged result is echoed to
`effective.cfg` in the output directory.  All subcommands return nonzero
with a one-line `error: ...` message on failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

from .bench import VARIANTS, BenchSpec, emit_csv, run_bench
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig, load_config, merge_config, save_config
from .corpus import build_vocab, encode, load_vocab, save_vocab
from .mapping import SCHEMES, build_mapping, load_mapping, save_mapping, usage_histogram
from .model import ModelConfig, init_model
from .rng import derive_seed
from .trainer import TrainConfig, evaluate_ppl, train

RUN_OVERRIDE_KEYS = (
    "train", "valid", "test", "out", "vocab_min_count", "vocab_max_size",
    "seed", "hidden", "layers", "scheme_in", "k_in", "m_in",
    "scheme_out", "k_out", "m_out", "dropout", "dropout_embed",
    "loss", "nce_k", "lr", "lr_decay", "optimizer", "clip",
    "batch", "bptt", "max_epochs", "eval_interval", "eval_batch", "wall_clock",
)


def _merged_config(args) -> RunConfig:
    file_values = load_config(args.config) if args.config else {}
    overrides = {
        key: getattr(args, key)
        for key in RUN_OVERRIDE_KEYS
        if getattr(args, key, None) is not None
    }
    return merge_config(file_values, overrides)


def _require(cfg: RunConfig, key: str) -> str:
    value = getattr(cfg, key)
    if not value:
        raise ValueError(f"config key {key!r} is required")
    return value


def _read_text(path: str, key: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise ValueError(f"config key {key!r}: no such file: {path}")
    return p.read_text(encoding="utf-8")


def _model_config(cfg: RunConfig, vocab_size: int) -> ModelConfig:
    return ModelConfig(
        vocab_size=vocab_size,
        hidden_dim=cfg.hidden,
        layers=cfg.layers,
        scheme_in=cfg.scheme_in,
        k_in=cfg.k_in,
        m_in=cfg.m_in,
        scheme_out=cfg.scheme_out,
        k_out=cfg.k_out,
        m_out=cfg.m_out,
        dropout=cfg.dropout,
        dropout_embed=cfg.dropout_embed,
        loss=cfg.loss,
        nce_k=cfg.nce_k,
        seed=cfg.seed,
    )


def _train_config(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(
        lr=cfg.lr,
        lr_decay=cfg.lr_decay,
        optimizer=cfg.optimizer,
        clip=cfg.clip,
        batch=cfg.batch,
        bptt=cfg.bptt,
        max_epochs=cfg.max_epochs,
        eval_interval=cfg.eval_interval,
        eval_batch=cfg.eval_batch,
        wall_clock=cfg.wall_clock,
    )


def _train_one(cfg: RunConfig, out_dir: Path, console=None) -> dict:
    """Full training run into out_dir; returns summary statistics."""
    train_text = _read_text(_require(cfg, "train"), "train")
    valid_text = _read_text(_require(cfg, "valid"), "valid")
    test_text = _read_text(cfg.test, "test") if cfg.test else None

    vocab = build_vocab(
        train_text, cfg.vocab_min_count, cfg.vocab_max_size or None
    )
    cfg = replace(cfg, m_in=cfg.m_in or vocab.size, out=str(out_dir))
    train_stream = encode(vocab, train_text)
    valid_stream = encode(vocab, valid_text)

    out_dir.mkdir(parents=True, exist_ok=True)
    save_vocab(out_dir / "vocab.txt", vocab)
    save_config(cfg, out_dir / "effective.cfg")

    model = init_model(_model_config(cfg, vocab.size))
    save_mapping(model.input_mapping, out_dir / "mapping_in.txt")
    if not model.config.dense_output:
        save_mapping(model.output.mapping, out_dir / "mapping_out.txt")

    tcfg = _train_config(cfg)
    with open(out_dir / "train_log.csv", "w", encoding="utf-8", newline="\n") as log:
        result = train(
            model, train_stream, valid_stream, tcfg, log_file=log, console=console
        )

    test_ppl = math.nan
    if test_text is not None:
        test_ppl = evaluate_ppl(model, encode(vocab, test_text), 1, cfg.bptt)

    save_checkpoint(
        out_dir / "model.ckpt",
        Checkpoint(
            model=model,
            optimizer=tcfg.optimizer,
            lr=result.final_lr,
            accumulators=result.opt_accumulators,
            vocab_hash=vocab.fingerprint(),
            epoch=result.best_epoch,
            best_valid_ppl=result.best_valid_ppl,
        ),
    )
    return {
        "best_valid_ppl": result.best_valid_ppl,
        "init_valid_ppl": result.init_valid_ppl,
        "test_ppl": test_ppl,
        "params": model.param_count(),
        "epochs": len(result.history),
    }


def cmd_train(args) -> int:
    cfg = _merged_config(args)
    out_dir = Path(_require(cfg, "out"))
    stats = _train_one(cfg, out_dir, console=sys.stdout)
    print(f"best_valid_ppl={stats['best_valid_ppl']:.4f}")
    if not math.isnan(stats["test_ppl"]):
        print(f"test_ppl={stats['test_ppl']:.4f}")
    return 0


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    vocab_path = args.vocab or Path(args.checkpoint).parent / "vocab.txt"
    if not Path(vocab_path).is_file():
        raise ValueError(f"no vocabulary file at {vocab_path} (pass --vocab)")
    vocab = load_vocab(vocab_path)
    if vocab.fingerprint() != ckpt.vocab_hash:
        if not args.force:
            print(
                "error: vocabulary fingerprint does not match the checkpoint "
                "(rerun with --force to score anyway)",
                file=sys.stderr,
            )
            return 1
        print(
            "warning: vocabulary fingerprint mismatch; proceeding under --force",
            file=sys.stderr,
        )
    stream = encode(vocab, _read_text(args.data, "data"))
    ppl = evaluate_ppl(ckpt.model, stream, args.batch, args.bptt)
    print(f"ppl={ppl:.4f}")
    return 0


SWEEP_KEYS = ("k_in", "m_in", "k_out", "m_out")


def cmd_sweep(args) -> int:
    cfg = _merged_config(args)
    out_dir = Path(_require(cfg, "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        values = [int(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ValueError(f"--values must be a comma list of integers: {args.values!r}")
    if not values:
        raise ValueError("--values is empty")

    rows = []
    for value in values:
        child = replace(
            cfg,
            **{args.vary: value},
            seed=derive_seed(cfg.seed, f"sweep/{args.vary}/{value}"),
        )
        child_dir = out_dir / f"{args.vary}_{value}"
        try:
            stats = _train_one(child, child_dir)
            row = (
                f"{value},{stats['best_valid_ppl']:.4f},"
                f"{stats['test_ppl']:.4f},{stats['params']}"
            )
            print(
                f"{args.vary}={value}: valid_ppl={stats['best_valid_ppl']:.4f} "
                f"test_ppl={stats['test_ppl']:.4f} params={stats['params']}"
            )
        except Exception as exc:  # noqa: BLE001 - children must not kill the sweep
            print(f"sweep {args.vary}={value} failed: {exc}", file=sys.stderr)
            row = f"{value},nan,nan,0"
        rows.append(row)

    csv_path = out_dir / "sweep.csv"
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("value,best_valid_ppl,test_ppl,params\n")
        fh.write("".join(r + "\n" for r in rows))
    print(f"wrote {csv_path}")
    return 0


def cmd_bench(args) -> int:
    spec = BenchSpec(
        vocab_size=args.vocab_size,
        hidden_dim=args.hidden,
        parts=args.k,
        pool_size=args.m,
        batch=args.batch,
        reps=args.reps,
        warmup=args.warmup,
        variants=tuple(v.strip() for v in args.variants.split(",") if v.strip()),
        seed=args.seed,
        threads=args.threads,
    )
    result = run_bench(spec)
    for name, reason in result.errors.items():
        print(f"warning: {name}: {reason}", file=sys.stderr)
    for vr in result.variants:
        print(
            f"{vr.variant}: median={vr.median_s:.6f}s mean={vr.mean_s:.6f}s "
            f"min={vr.min_s:.6f}s flops={vr.counter.flops} "
            f"param_bytes={vr.param_bytes}"
        )
    if args.out:
        emit_csv([result], args.out)
        print(f"wrote {args.out}")
    return 0


def cmd_map(args) -> int:
    if args.action == "gen":
        mapping = build_mapping(
            args.scheme, args.vocab_size, args.k, args.m, args.seed
        )
        save_mapping(mapping, args.out)
        print(
            f"wrote {args.out}: V={mapping.vocab_size} K={mapping.parts_per_word} "
            f"M={mapping.pool_size} scheme={mapping.scheme} seed={mapping.seed}"
        )
        return 0
    mapping = load_mapping(args.file)
    usage = usage_histogram(mapping)
    part_ok = (
        mapping.pool_size % mapping.parts_per_word == 0
        and bool(
            (
                mapping.table // (mapping.pool_size // mapping.parts_per_word)
                == range(mapping.parts_per_word)
            ).all()
        )
    )
    print(f"vocab_size = {mapping.vocab_size}")
    print(f"parts_per_word = {mapping.parts_per_word}")
    print(f"pool_size = {mapping.pool_size}")
    print(f"scheme = {mapping.scheme}")
    print(f"seed = {mapping.seed}")
    print(f"usage min/max/mean = {usage.min()}/{usage.max()}/{usage.mean():.2f}")
    print(f"position_partitioned = {'yes' if part_ok else 'no'}")
    return 0


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="flat key = value config file")
    p.add_argument("--train", metavar="PATH")
    p.add_argument("--valid", metavar="PATH")
    p.add_argument("--test", metavar="PATH")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--seed", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--scheme-in", choices=SCHEMES)
    p.add_argument("--scheme-out", choices=SCHEMES)
    p.add_argument("--k-in", type=int)
    p.add_argument("--m-in", type=int)
    p.add_argument("--k-out", type=int)
    p.add_argument("--m-out", type=int)
    p.add_argument("--loss", choices=("full", "nce"))
    p.add_argument("--nce-k", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--lr-decay", type=float)
    p.add_argument("--optimizer", choices=("sgd", "adagrad"))
    p.add_argument("--clip", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--bptt", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--eval-interval", type=int)
    p.add_argument("--eval-batch", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--dropout-embed", type=float)
    p.add_argument("--vocab-min-count", type=int)
    p.add_argument("--vocab-max-size", type=int)
    p.add_argument(
        "--wall-clock", action="store_const", const=True, default=None,
        help="record real elapsed seconds in the CSV log (off by default "
        "so logs are reproducible)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slimlm",
        description="LSTM language models with shared-sub-vector embedding layers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model")
    _add_run_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate perplexity of a checkpoint")
    p_eval.add_argument("checkpoint")
    p_eval.add_argument("--data", required=True, metavar="PATH")
    p_eval.add_argument("--vocab", metavar="PATH")
    p_eval.add_argument("--batch", type=int, default=1)
    p_eval.add_argument("--bptt", type=int, default=35)
    p_eval.add_argument("--force", action="store_true")
    p_eval.set_defaults(func=cmd_eval)

    p_sweep = sub.add_parser("sweep", help="train one model per swept value")
    _add_run_flags(p_sweep)
    p_sweep.add_argument("--vary", required=True, choices=SWEEP_KEYS)
    p_sweep.add_argument("--values", required=True, metavar="N,N,...")
    p_sweep.set_defaults(func=cmd_sweep)

    p_bench = sub.add_parser("bench", help="time output-layer variants")
    p_bench.add_argument("--vocab-size", type=int, default=50000)
    p_bench.add_argument("--hidden", type=int, default=512)
    p_bench.add_argument("--k", type=int, default=8)
    p_bench.add_argument("--m", type=int, default=4096)
    p_bench.add_argument("--batch", type=int, default=20)
    p_bench.add_argument("--reps", type=int, default=10)
    p_bench.add_argument("--warmup", type=int, default=3)
    p_bench.add_argument("--variants", default=",".join(VARIANTS))
    p_bench.add_argument("--threads", type=int, default=1)
    p_bench.add_argument("--seed", type=int, default=1)
    p_bench.add_argument("--out", metavar="CSV")
    p_bench.set_defaults(func=cmd_bench)

    p_map = sub.add_parser("map", help="generate or inspect mapping files")
    map_sub = p_map.add_subparsers(dest="action", required=True)
    p_gen = map_sub.add_parser("gen")
    p_gen.add_argument("--vocab-size", type=int, required=True)
    p_gen.add_argument("--k", type=int, required=True)
    p_gen.add_argument("--m", type=int, required=True)
    p_gen.add_argument("--scheme", choices=SCHEMES, default="balanced")
    p_gen.add_argument("--seed", type=int, default=1)
    p_gen.add_argument("--out", required=True, metavar="PATH")
    p_gen.set_defaults(func=cmd_map, action="gen")
    p_inspect = map_sub.add_parser("inspect")
    p_inspect.add_argument("file")
    p_inspect.set_defaults(func=cmd_map, action="inspect")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
