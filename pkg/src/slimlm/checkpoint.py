"""Self-contained binary checkpoints.

Layout, all integers little-endian unsigned 64-bit:

    magic  b"SLIMLM1\\n"
    counts L, n, V, K_in, M_in, K_out, M_out, flags
    length-prefixed input mapping, text format
    length-prefixed output mapping (absent for dense output)
    parameter arrays, raw float64 row-major, fixed order:
        input pool (M_in, n/K_in); per layer weight (2n, 4n), bias (4n,);
        output pool (M_out, n/K_out), or (V, n) when dense
    adagrad accumulators in the same shapes/order (present per flags)
    length-prefixed metadata block, flat `key = value` text

flags: bit 0 dense output (K_out = M_out = 0 in counts), bit 1
accumulators present, bit 2 model was NCE-trained.  The metadata block
carries seed, dropout probabilities, loss kind, optimizer, current lr,
vocab hash, epoch, and best validation perplexity; mappings travel by
value, so a checkpoint reloads without the original corpus.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .embedding import EmbeddingPool
from .lstm import LstmLayerParams
from .mapping import parse_mapping, serialize_mapping
from .model import Model, ModelConfig, identity_mapping
from .softmax import OutputLayer

MAGIC = b"SLIMLM1\n"

FLAG_DENSE_OUT = 1 << 0
FLAG_ACCUMULATORS = 1 << 1
FLAG_NCE = 1 << 2


@dataclass
class Checkpoint:
    model: Model
    optimizer: str
    lr: float
    accumulators: list[np.ndarray] | None
    vocab_hash: int
    epoch: int
    best_valid_ppl: float


def _write_block(fh, text: str) -> None:
    data = text.encode("utf-8")
    fh.write(struct.pack("<Q", len(data)))
    fh.write(data)


def _read_exact(fh, size: int) -> bytes:
    data = fh.read(size)
    if len(data) != size:
        raise ValueError("truncated checkpoint file")
    return data


def _read_block(fh) -> str:
    (size,) = struct.unpack("<Q", _read_exact(fh, 8))
    return _read_exact(fh, size).decode("utf-8")


def _metadata_text(ckpt: Checkpoint) -> str:
    cfg = ckpt.model.config
    pairs = [
        ("seed", cfg.seed),
        ("dropout", repr(cfg.dropout)),
        ("dropout_embed", repr(cfg.dropout_embed)),
        ("loss", cfg.loss),
        ("nce_k", cfg.nce_k),
        ("optimizer", ckpt.optimizer),
        ("lr", repr(ckpt.lr)),
        ("vocab_hash", ckpt.vocab_hash),
        ("epoch", ckpt.epoch),
        ("best_valid_ppl", repr(ckpt.best_valid_ppl)),
    ]
    return "".join(f"{k} = {v}\n" for k, v in pairs)


def _parse_metadata(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, sep, raw = line.partition("=")
        if not sep:
            raise ValueError(f"bad checkpoint metadata line {line!r}")
        values[key.strip()] = raw.strip()
    return values


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    model = ckpt.model
    cfg = model.config
    flags = 0
    if cfg.dense_output:
        flags |= FLAG_DENSE_OUT
    if ckpt.accumulators is not None:
        flags |= FLAG_ACCUMULATORS
    if cfg.loss == "nce":
        flags |= FLAG_NCE
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(
            struct.pack(
                "<8Q",
                cfg.layers,
                cfg.hidden_dim,
                cfg.vocab_size,
                cfg.k_in,
                cfg.m_in,
                cfg.k_out,
                cfg.m_out,
                flags,
            )
        )
        _write_block(fh, serialize_mapping(model.input_mapping))
        if not cfg.dense_output:
            _write_block(fh, serialize_mapping(model.output.mapping))
        for arr in model.parameters():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        if ckpt.accumulators is not None:
            for arr in ckpt.accumulators:
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        _write_block(fh, _metadata_text(ckpt))


def _read_array(fh, shape) -> np.ndarray:
    n = int(np.prod(shape))
    data = _read_exact(fh, n * 8)
    return np.frombuffer(data, dtype="<f8").reshape(shape).copy()


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        if _read_exact(fh, len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic)")
        layers, hidden, vocab, k_in, m_in, k_out, m_out, flags = struct.unpack(
            "<8Q", _read_exact(fh, 64)
        )
        dense = bool(flags & FLAG_DENSE_OUT)
        if dense and (k_out or m_out):
            raise ValueError(f"{path}: dense flag set but output counts nonzero")

        in_map = parse_mapping(_read_block(fh))
        if (in_map.vocab_size, in_map.parts_per_word, in_map.pool_size) != (
            vocab, k_in, m_in,
        ):
            raise ValueError(f"{path}: input mapping disagrees with header counts")
        if dense:
            out_map = identity_mapping(vocab)
        else:
            out_map = parse_mapping(_read_block(fh))
            if (out_map.vocab_size, out_map.parts_per_word, out_map.pool_size) != (
                vocab, k_out, m_out,
            ):
                raise ValueError(
                    f"{path}: output mapping disagrees with header counts"
                )

        shapes = [(m_in, hidden // k_in)]
        for _ in range(layers):
            shapes += [(2 * hidden, 4 * hidden), (4 * hidden,)]
        shapes.append((vocab, hidden) if dense else (m_out, hidden // k_out))
        params = [_read_array(fh, s) for s in shapes]
        accumulators = None
        if flags & FLAG_ACCUMULATORS:
            accumulators = [_read_array(fh, s) for s in shapes]
        meta = _parse_metadata(_read_block(fh))

    cfg = ModelConfig(
        vocab_size=vocab,
        hidden_dim=hidden,
        layers=layers,
        scheme_in=in_map.scheme,
        k_in=k_in,
        m_in=m_in,
        scheme_out="partitioned" if dense else out_map.scheme,
        k_out=k_out,
        m_out=m_out,
        dropout=float(meta["dropout"]),
        dropout_embed=float(meta["dropout_embed"]),
        loss=meta["loss"],
        nce_k=int(meta["nce_k"]),
        seed=int(meta["seed"]),
    )
    model = Model(
        cfg,
        in_map,
        EmbeddingPool(in_map, params[0]),
        [
            LstmLayerParams(params[1 + 2 * l], params[2 + 2 * l])
            for l in range(layers)
        ],
        OutputLayer(EmbeddingPool(out_map, params[-1]), out_map),
    )
    return Checkpoint(
        model=model,
        optimizer=meta["optimizer"],
        lr=float(meta["lr"]),
        accumulators=accumulators,
        vocab_hash=int(meta["vocab_hash"]),
        epoch=int(meta["epoch"]),
        best_valid_ppl=float(meta["best_valid_ppl"]),
    )
