"""Model assembly: pooled input embedding, LSTM stack, pooled or dense output.

A dense output layer is represented internally as a pooled layer over the
K=1 identity mapping (pool row w = output vector of word w), so the
forward/backward/NCE paths need no special cases; checkpoints still store
it as a plain V x n matrix.  Config uses k_out = m_out = 0 for dense.

Initialization draws every trainable weight from U(-0.05, 0.05) in a
fixed order (input pool, then each layer's weight and bias, then the
output parameters) from a seeded stream, so equal seeds give bit-equal
models.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .embedding import EmbeddingPool
from .lstm import LstmLayerParams
from .mapping import SCHEMES, SubVectorMapping, build_mapping
from .rng import SplitMix64, derive_seed
from .softmax import OutputLayer

LOSSES = ("full", "nce")

INIT_SCALE = 0.05


@dataclass
class ModelConfig:
    vocab_size: int
    hidden_dim: int = 128
    layers: int = 2
    scheme_in: str = "balanced"
    k_in: int = 8
    m_in: int = 0
    scheme_out: str = "partitioned"
    k_out: int = 0  # 0 (with m_out 0) selects a dense output layer
    m_out: int = 0
    dropout: float = 0.0
    dropout_embed: float = 0.0
    loss: str = "full"
    nce_k: int = 20
    seed: int = 1

    def __post_init__(self):
        self.validate()

    @property
    def dense_output(self) -> bool:
        return self.k_out == 0

    def validate(self) -> None:
        if self.vocab_size < 1:
            raise ValueError("vocab_size must be positive")
        if self.hidden_dim < 1 or self.layers < 1:
            raise ValueError("hidden_dim and layers must be positive")
        if self.scheme_in not in SCHEMES:
            raise ValueError(f"unknown input scheme {self.scheme_in!r}")
        if self.k_in < 1 or self.m_in < 1:
            raise ValueError("k_in and m_in must be positive")
        if self.hidden_dim % self.k_in:
            raise ValueError(
                f"k_in {self.k_in} must divide embedding width {self.hidden_dim}"
            )
        if (self.k_out == 0) != (self.m_out == 0):
            raise ValueError("k_out and m_out must both be 0 (dense) or both set")
        if not self.dense_output:
            if self.scheme_out not in SCHEMES:
                raise ValueError(f"unknown output scheme {self.scheme_out!r}")
            if self.scheme_out == "balanced":
                raise ValueError(
                    "output layer needs a position-partitioned scheme "
                    "(partitioned or hashed)"
                )
            if self.hidden_dim % self.k_out:
                raise ValueError(
                    f"k_out {self.k_out} must divide hidden_dim {self.hidden_dim}"
                )
            if self.m_out % self.k_out:
                raise ValueError(
                    f"k_out {self.k_out} must divide m_out {self.m_out}"
                )
        if not 0.0 <= self.dropout < 1.0 or not 0.0 <= self.dropout_embed < 1.0:
            raise ValueError("dropout probabilities must lie in [0, 1)")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.loss == "nce" and self.nce_k < 1:
            raise ValueError("nce_k must be positive")

    def with_seed(self, seed: int) -> "ModelConfig":
        return replace(self, seed=seed)


def identity_mapping(vocab_size: int) -> SubVectorMapping:
    """K=1 mapping where word w owns pool row w: a dense layer in disguise."""
    table = np.arange(vocab_size, dtype=np.int64)[:, None]
    return SubVectorMapping(vocab_size, 1, vocab_size, "partitioned", 0, table)


@dataclass
class Model:
    config: ModelConfig
    input_mapping: SubVectorMapping
    input_pool: EmbeddingPool
    lstm_layers: list[LstmLayerParams]
    output: OutputLayer
    param_names: list[str] = field(init=False, repr=False)

    def __post_init__(self):
        names = ["input_pool"]
        for l in range(len(self.lstm_layers)):
            names += [f"lstm{l}.weight", f"lstm{l}.bias"]
        names.append("output_pool")
        self.param_names = names

    def parameters(self) -> list[np.ndarray]:
        """Trainable arrays in the fixed init/serialization order."""
        arrs = [self.input_pool.data]
        for layer in self.lstm_layers:
            arrs += [layer.weight, layer.bias]
        arrs.append(self.output.pool.data)
        return arrs

    def set_parameters(self, values: list[np.ndarray]) -> None:
        current = self.parameters()
        if len(values) != len(current):
            raise ValueError("parameter list length mismatch")
        for dst, src in zip(current, values):
            if dst.shape != src.shape:
                raise ValueError(f"shape mismatch {dst.shape} vs {src.shape}")
            dst[...] = src

    def param_count(self) -> int:
        """Trainable floats; mapping tables are excluded."""
        return sum(a.size for a in self.parameters())


def init_model(cfg: ModelConfig) -> Model:
    cfg.validate()
    in_map = build_mapping(
        cfg.scheme_in,
        cfg.vocab_size,
        cfg.k_in,
        cfg.m_in,
        derive_seed(cfg.seed, "mapping/input"),
    )
    if cfg.dense_output:
        out_map = identity_mapping(cfg.vocab_size)
    else:
        out_map = build_mapping(
            cfg.scheme_out,
            cfg.vocab_size,
            cfg.k_out,
            cfg.m_out,
            derive_seed(cfg.seed, "mapping/output"),
        )
    rng = SplitMix64(derive_seed(cfg.seed, "init"))
    n = cfg.hidden_dim
    in_pool = EmbeddingPool(
        in_map, rng.uniform_array(-INIT_SCALE, INIT_SCALE, (cfg.m_in, n // cfg.k_in))
    )
    layers = [
        LstmLayerParams(
            rng.uniform_array(-INIT_SCALE, INIT_SCALE, (2 * n, 4 * n)),
            rng.uniform_array(-INIT_SCALE, INIT_SCALE, (4 * n,)),
        )
        for _ in range(cfg.layers)
    ]
    out_rows = cfg.vocab_size if cfg.dense_output else cfg.m_out
    out_dim = n if cfg.dense_output else n // cfg.k_out
    out_pool = EmbeddingPool(
        out_map, rng.uniform_array(-INIT_SCALE, INIT_SCALE, (out_rows, out_dim))
    )
    return Model(cfg, in_map, in_pool, layers, OutputLayer(out_pool, out_map))
