"""LSTM language models whose embedding layers share pooled sub-vectors."""

from .bench import BenchResult, BenchSpec, emit_csv, run_bench
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig, format_config, load_config, merge_config
from .corpus import (
    Vocabulary,
    batchify,
    build_vocab,
    encode,
    load_vocab,
    save_vocab,
    unigram_counts,
    windows,
)
from .embedding import (
    EmbeddingPool,
    PoolGradient,
    embed_backward,
    embed_forward,
    materialize_dense,
    param_count,
)
from .lstm import (
    LstmLayerParams,
    LstmState,
    lstm_cell_backward,
    lstm_cell_forward,
    sample_dropout_masks,
    stack_backward,
    stack_forward,
)
from .mapping import (
    SCHEMES,
    SubVectorMapping,
    build_balanced_mapping,
    build_hashed_mapping,
    build_mapping,
    build_partitioned_mapping,
    load_mapping,
    save_mapping,
    usage_histogram,
)
from .model import Model, ModelConfig, identity_mapping, init_model
from .rng import SplitMix64, derive_seed, fnv1a64
from .softmax import (
    FlopCounter,
    NoiseTable,
    OutputLayer,
    build_noise_table,
    logits_dp,
    logits_naive,
    nce_loss,
    nce_loss_batch,
    output_backward,
    partial_products,
    softmax_xent,
    softmax_xent_batch,
)
from .synthetic import generate_text, make_desk_corpus
from .trainer import (
    TrainConfig,
    TrainResult,
    TrainingDiverged,
    evaluate_ppl,
    train,
    train_step,
)

__version__ = "0.1.0"
