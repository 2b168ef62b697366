"""Training loop: truncated BPTT with SGD or Adagrad, validation-driven
learning-rate halving, best-model retention, and perplexity evaluation.

Hidden state is carried across consecutive windows within an epoch and
reset at epoch boundaries.  Validation perplexity always uses the exact
normalized softmax, whatever objective trained the model, with dropout
disabled.  The run log is CSV `epoch,train_loss,valid_ppl,lr,seconds`;
the seconds column is 0.000 unless wall_clock is set, so logs from equal
seeds compare byte-for-byte (elapsed time still goes to the console).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .corpus import batchify, unigram_counts, windows
from .embedding import PoolGradient, embed_backward, embed_forward
from .lstm import LstmState, sample_dropout_masks, stack_backward, stack_forward
from .model import Model
from .rng import SplitMix64, derive_seed
from .softmax import (
    NoiseTable,
    build_noise_table,
    logits_dp,
    nce_loss_batch,
    output_backward,
    softmax_nll_batch,
    softmax_xent_batch,
)

LOG_HEADER = "epoch,train_loss,valid_ppl,lr,seconds"


class TrainingDiverged(RuntimeError):
    """Raised when a training step produces a non-finite loss."""


@dataclass
class TrainConfig:
    lr: float = 1.0
    lr_decay: float = 0.5
    optimizer: str = "sgd"  # or "adagrad"
    clip: float = 5.0  # global gradient-norm ceiling; 0 disables
    batch: int = 20
    bptt: int = 35
    max_epochs: int = 15
    eval_interval: int = 1
    eval_batch: int = 10
    adagrad_eps: float = 1e-10
    wall_clock: bool = False

    def validate(self) -> None:
        if self.lr <= 0 or not 0 < self.lr_decay <= 1:
            raise ValueError("lr must be positive, lr_decay in (0, 1]")
        if self.optimizer not in ("sgd", "adagrad"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.clip < 0:
            raise ValueError("clip must be >= 0")
        if min(self.batch, self.bptt, self.eval_interval, self.eval_batch) < 1:
            raise ValueError("batch, bptt, eval_interval, eval_batch must be >= 1")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")


class Optimizer:
    """SGD or Adagrad over a fixed list of parameter arrays, updated in place."""

    def __init__(self, kind: str, params: list[np.ndarray], lr: float,
                 eps: float = 1e-10):
        if kind not in ("sgd", "adagrad"):
            raise ValueError(f"unknown optimizer {kind!r}")
        self.kind = kind
        self.params = params
        self.lr = lr
        self.eps = eps
        self.accumulators = (
            [np.zeros_like(p) for p in params] if kind == "adagrad" else None
        )

    def step(self, grads: list[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ValueError("gradient list length mismatch")
        if self.kind == "sgd":
            for p, g in zip(self.params, grads):
                p -= self.lr * g
        else:
            for p, g, acc in zip(self.params, grads, self.accumulators):
                acc += g * g
                p -= self.lr * g / (np.sqrt(acc) + self.eps)


def global_norm(grads: list[np.ndarray]) -> float:
    return math.sqrt(sum(float((g * g).sum()) for g in grads))


def clip_gradients(grads: list[np.ndarray], clip: float) -> float:
    """Scale all arrays so the global norm is at most clip; returns the
    pre-clip norm.  clip = 0 disables."""
    norm = global_norm(grads)
    if clip > 0 and norm > clip:
        scale = clip / norm
        for g in grads:
            g *= scale
    return norm


def loss_and_grads(
    model: Model,
    x: np.ndarray,
    y: np.ndarray,
    state: LstmState,
    masks: list[np.ndarray | None] | None = None,
    noise: NoiseTable | None = None,
    nce_rng: SplitMix64 | None = None,
) -> tuple[float, list[np.ndarray], LstmState]:
    """Mean loss over the window plus gradients in model.parameters() order.

    The full-softmax path scores every word with the two-step logits; the
    NCE path scores the target against nce_k fresh noise draws per
    position.  Gradients are already divided by the token count.
    """
    tokens = x.size
    embedded = embed_forward(model.input_pool, model.input_mapping, x)
    top, new_state, cache = stack_forward(model.lstm_layers, embedded, state, masks)
    flat = top.reshape(tokens, -1)
    targets = y.reshape(-1)
    if model.config.loss == "full" or noise is None:
        z = logits_dp(model.output, flat)
        losses, grad_z = softmax_xent_batch(z, targets)
        loss_sum = float(losses.sum())
        grad_h, grad_out = output_backward(model.output, flat, grad_z)
    else:
        loss_sum, grad_h, grad_out = nce_loss_batch(
            model.output, flat, targets, noise, model.config.nce_k, nce_rng
        )
    grad_top = grad_h.reshape(top.shape)
    grad_embedded, layer_grads = stack_backward(cache, grad_top)
    in_grad = PoolGradient.zeros_like(model.input_pool)
    embed_backward(in_grad, model.input_mapping, x, grad_embedded)
    grads = [in_grad.data]
    for gw, gb in layer_grads:
        grads += [gw, gb]
    grads.append(grad_out)
    inv = 1.0 / tokens
    for g in grads:
        g *= inv
    return loss_sum * inv, grads, new_state


def train_step(
    model: Model,
    x: np.ndarray,
    y: np.ndarray,
    state: LstmState,
    opt: Optimizer,
    clip: float = 5.0,
    masks: list[np.ndarray | None] | None = None,
    noise: NoiseTable | None = None,
    nce_rng: SplitMix64 | None = None,
) -> tuple[float, LstmState, float]:
    """One clipped optimizer update; returns (mean loss, state, grad norm)."""
    loss, grads, new_state = loss_and_grads(model, x, y, state, masks, noise, nce_rng)
    if not math.isfinite(loss):
        raise TrainingDiverged(f"non-finite training loss {loss}")
    norm = clip_gradients(grads, clip)
    opt.step(grads)
    return loss, new_state, norm


def evaluate_ppl(
    model: Model, stream: np.ndarray, batch_size: int = 1, bptt: int = 35
) -> float:
    """exp(mean NLL) over the stream's batched successor pairs.

    Dropout off, exact softmax, state carried across the whole stream.
    With batch_size 1 every transition of the stream is scored.
    """
    if len(stream) < 2:
        raise ValueError("evaluation stream needs at least two tokens")
    batched = batchify(stream, batch_size)
    state = LstmState.zeros(
        model.config.layers, batch_size, model.config.hidden_dim
    )
    nll = 0.0
    count = 0
    for x, y in windows(batched, bptt):
        embedded = embed_forward(model.input_pool, model.input_mapping, x)
        top, state, _ = stack_forward(model.lstm_layers, embedded, state)
        z = logits_dp(model.output, top.reshape(x.size, -1))
        nll += float(softmax_nll_batch(z, y.reshape(-1)).sum())
        count += x.size
    return math.exp(nll / count)


@dataclass
class EpochRow:
    epoch: int
    train_loss: float
    valid_ppl: float
    lr: float
    seconds: float

    def rendered(self) -> str:
        return (
            f"{self.epoch},{self.train_loss:.6f},{self.valid_ppl:.4f},"
            f"{self.lr:.6g},{self.seconds:.3f}"
        )


@dataclass
class TrainResult:
    history: list[EpochRow] = field(default_factory=list)
    init_valid_ppl: float = math.nan
    best_valid_ppl: float = math.nan
    best_epoch: int = 0
    final_lr: float = math.nan
    opt_accumulators: list[np.ndarray] | None = None


def train(
    model: Model,
    train_stream: np.ndarray,
    valid_stream: np.ndarray,
    cfg: TrainConfig,
    log_file=None,
    console=None,
) -> TrainResult:
    """Full training run; the model is left holding the best-validation
    parameters (and optimizer state) seen, ready to checkpoint.

    log_file, when given, receives the CSV log; console, when given,
    receives one human-readable line per epoch including real elapsed
    time regardless of cfg.wall_clock.
    """
    cfg.validate()
    mcfg = model.config
    drop_rng = SplitMix64(derive_seed(mcfg.seed, "dropout"))
    nce_rng = SplitMix64(derive_seed(mcfg.seed, "noise"))
    noise = None
    if mcfg.loss == "nce":
        counts = unigram_counts(train_stream, mcfg.vocab_size)
        noise = build_noise_table(counts)

    params = model.parameters()
    opt = Optimizer(cfg.optimizer, params, cfg.lr, cfg.adagrad_eps)
    if log_file is not None:
        log_file.write(LOG_HEADER + "\n")
        log_file.flush()

    result = TrainResult()
    result.init_valid_ppl = evaluate_ppl(
        model, valid_stream, cfg.eval_batch, cfg.bptt
    )
    best_params = [p.copy() for p in params]
    best_acc = None
    result.best_valid_ppl = result.init_valid_ppl
    result.best_epoch = 0

    batched = batchify(train_stream, cfg.batch)
    layers, hidden = mcfg.layers, mcfg.hidden_dim
    for epoch in range(1, cfg.max_epochs + 1):
        started = time.perf_counter()
        state = LstmState.zeros(layers, cfg.batch, hidden)
        loss_total = 0.0
        token_total = 0
        for x, y in windows(batched, cfg.bptt):
            masks = None
            if mcfg.dropout > 0 or mcfg.dropout_embed > 0:
                masks = sample_dropout_masks(
                    drop_rng, x.shape[0], cfg.batch, hidden, layers,
                    mcfg.dropout_embed, mcfg.dropout,
                )
            loss, state, _ = train_step(
                model, x, y, state, opt, cfg.clip, masks, noise, nce_rng
            )
            loss_total += loss * x.size
            token_total += x.size
        train_loss = loss_total / token_total

        valid_ppl = math.nan
        if epoch % cfg.eval_interval == 0 or epoch == cfg.max_epochs:
            valid_ppl = evaluate_ppl(model, valid_stream, cfg.eval_batch, cfg.bptt)
            if valid_ppl < result.best_valid_ppl:
                result.best_valid_ppl = valid_ppl
                result.best_epoch = epoch
                best_params = [p.copy() for p in params]
                if opt.accumulators is not None:
                    best_acc = [a.copy() for a in opt.accumulators]
            elif cfg.optimizer == "sgd":
                opt.lr *= cfg.lr_decay

        elapsed = time.perf_counter() - started
        row = EpochRow(
            epoch, train_loss, valid_ppl, opt.lr,
            elapsed if cfg.wall_clock else 0.0,
        )
        result.history.append(row)
        if log_file is not None:
            log_file.write(row.rendered() + "\n")
            log_file.flush()
        if console is not None:
            console.write(
                f"epoch {epoch}: train_loss={train_loss:.4f} "
                f"valid_ppl={valid_ppl:.4f} lr={opt.lr:.6g} ({elapsed:.1f}s)\n"
            )
            console.flush()

    model.set_parameters(best_params)
    if opt.accumulators is not None and best_acc is not None:
        for dst, src in zip(opt.accumulators, best_acc):
            dst[...] = src
    result.final_lr = opt.lr
    result.opt_accumulators = opt.accumulators
    return result
