"""Compressed output layer: two-step logit evaluation and exact gradients.

With a position-partitioned mapping, the logit of word w against hidden
vector h = [h_1 .. h_K] is z_w = sum_p h_p . a_{table[w][p]}, and each
partial dot product h_p . a appears once per unique (p, pool row) pair.
Logits are therefore evaluated in two steps:

1. all M unique partial dot products, as K dense (M/K x d) @ (d,) products
   over contiguous partition blocks  — O(M*H/K);
2. per-word sums of K cached partials, driven by the mapping table — O(V*K).

This replaces the O(V*H) dense product of an ordinary softmax layer.
Gradients follow the same structure in reverse: per-row upstream sums are
pooled first (O(V*K)), then hit the parameters once (O(M*H/K)).

Also here: numerically stable softmax cross-entropy, the sampled NCE
objective with its gather-only gradients, and the smoothed-unigram noise
table it draws from.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .embedding import EmbeddingPool, PoolGradient
from .mapping import SubVectorMapping
from .rng import SplitMix64


@dataclass
class FlopCounter:
    """Analytic multiply-add / addition counts, incremented where work runs."""

    macs: int = 0
    adds: int = 0

    @property
    def flops(self) -> int:
        return 2 * self.macs + self.adds


@dataclass
class OutputLayer:
    """Output sub-vector pool over a position-partitioned mapping."""

    pool: EmbeddingPool
    mapping: SubVectorMapping

    def __post_init__(self):
        if not self.mapping.is_position_partitioned():
            raise ValueError(
                "output layer requires a partitioned or hashed mapping; "
                f"got scheme {self.mapping.scheme!r}"
            )
        if self.pool.mapping is not self.mapping and self.pool.mapping != self.mapping:
            raise ValueError("pool and mapping disagree")

    @property
    def hidden_dim(self) -> int:
        return self.pool.width

    @property
    def vocab_size(self) -> int:
        return self.mapping.vocab_size


def _as_batch(h: np.ndarray, hidden_dim: int) -> tuple[np.ndarray, bool]:
    h = np.asarray(h, dtype=np.float64)
    if h.ndim == 1:
        if h.shape[0] != hidden_dim:
            raise ValueError(f"hidden vector length {h.shape[0]} != {hidden_dim}")
        return h[None, :], True
    if h.ndim != 2 or h.shape[1] != hidden_dim:
        raise ValueError(f"hidden batch shape {h.shape} incompatible with H={hidden_dim}")
    return h, False


def logits_naive(
    layer: OutputLayer, h: np.ndarray, counter: FlopCounter | None = None
) -> np.ndarray:
    """Oracle: materialize every word's embedding and take direct dot products."""
    h, squeeze = _as_batch(h, layer.hidden_dim)
    vocab = layer.vocab_size
    dense = layer.pool.data[layer.mapping.table].reshape(vocab, -1)
    z = h @ dense.T
    if counter is not None:
        counter.macs += h.shape[0] * vocab * layer.hidden_dim
    return z[0] if squeeze else z


def partial_products(layer: OutputLayer, h: np.ndarray) -> np.ndarray:
    """Step 1: all M unique partial dot products, laid out (M, batch)."""
    h, _ = _as_batch(h, layer.hidden_dim)
    part = layer.mapping.partition_size
    sub_dim = layer.pool.sub_dim
    u = np.empty((layer.pool.pool_size, h.shape[0]))
    for p in range(layer.mapping.parts_per_word):
        block = layer.pool.data[p * part : (p + 1) * part]
        u[p * part : (p + 1) * part] = block @ h[:, p * sub_dim : (p + 1) * sub_dim].T
    return u


def logits_dp(
    layer: OutputLayer, h: np.ndarray, counter: FlopCounter | None = None
) -> np.ndarray:
    """Two-step logits; equals logits_naive up to rounding.

    Step 2 accumulates partitions in fixed order p = 0..K-1 so results are
    reproducible.
    """
    h2, squeeze = _as_batch(h, layer.hidden_dim)
    table = layer.mapping.table
    u = partial_products(layer, h2)
    z = u[table[:, 0]]
    for p in range(1, layer.mapping.parts_per_word):
        z = z + u[table[:, p]]
    if counter is not None:
        batch = h2.shape[0]
        counter.macs += batch * layer.pool.pool_size * layer.pool.sub_dim
        counter.adds += batch * layer.vocab_size * (layer.mapping.parts_per_word - 1)
    return z[:, 0] if squeeze else z.T


def softmax_xent(z: np.ndarray, target: int) -> tuple[float, np.ndarray]:
    """(-log p(target), softmax(z) - onehot(target)) with max-subtraction."""
    z = np.asarray(z, dtype=np.float64)
    if not 0 <= target < z.shape[0]:
        raise ValueError(f"target {target} outside [0, {z.shape[0]})")
    losses, grad = softmax_xent_batch(z[None, :], np.array([target]))
    return float(losses[0]), grad[0]


def softmax_xent_batch(
    z: np.ndarray, targets: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise cross-entropy losses and logit gradients (of the summed loss)."""
    z = np.asarray(z, dtype=np.float64)
    targets = np.asarray(targets)
    if targets.size and (targets.min() < 0 or targets.max() >= z.shape[1]):
        raise ValueError(f"target outside [0, {z.shape[1]})")
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    denom = ez.sum(axis=1, keepdims=True)
    logz = np.log(denom) + zmax
    rows = np.arange(z.shape[0])
    losses = logz[:, 0] - z[rows, targets]
    grad = ez / denom
    grad[rows, targets] -= 1.0
    return losses, grad


def softmax_nll_batch(z: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Row-wise -log p(target) only, for evaluation paths that skip gradients."""
    z = np.asarray(z, dtype=np.float64)
    targets = np.asarray(targets)
    if targets.size and (targets.min() < 0 or targets.max() >= z.shape[1]):
        raise ValueError(f"target outside [0, {z.shape[1]})")
    zmax = z.max(axis=1)
    logz = np.log(np.exp(z - zmax[:, None]).sum(axis=1)) + zmax
    return logz - z[np.arange(z.shape[0]), targets]


def output_backward(
    layer: OutputLayer, h: np.ndarray, grad_z: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of sum_w grad_z[w] * z_w w.r.t. h and the pool.

    Reverse of the two-step evaluation: pool the per-word upstreams into
    per-row sums G (O(V*K)), then grad_h_p = block_p^T G_p and
    grad_pool_p = G_p h_p^T (O(M*H/K)).  Returns (grad_h, grad_pool).
    """
    h2, squeeze = _as_batch(h, layer.hidden_dim)
    batch = h2.shape[0]
    grad_z = np.asarray(grad_z, dtype=np.float64)
    expect = (layer.vocab_size,) if squeeze else (batch, layer.vocab_size)
    if grad_z.shape != expect:
        raise ValueError(f"grad_z shape {grad_z.shape} != {expect}")
    gz = grad_z[None, :] if squeeze else grad_z

    parts = layer.mapping.parts_per_word
    part = layer.mapping.partition_size
    sub_dim = layer.pool.sub_dim
    table = layer.mapping.table

    # per-row upstream sums, batch-flattened bincount per partition
    g = np.empty((batch, layer.pool.pool_size))
    offsets = np.arange(batch, dtype=np.int64)[:, None] * part
    for p in range(parts):
        local = (offsets + (table[:, p] - p * part)[None, :]).ravel()
        g[:, p * part : (p + 1) * part] = np.bincount(
            local, weights=gz.ravel(), minlength=batch * part
        ).reshape(batch, part)

    grad_h = np.empty_like(h2)
    grad_pool = np.empty_like(layer.pool.data)
    for p in range(parts):
        block = layer.pool.data[p * part : (p + 1) * part]
        gp = g[:, p * part : (p + 1) * part]
        grad_h[:, p * sub_dim : (p + 1) * sub_dim] = gp @ block
        grad_pool[p * part : (p + 1) * part] = gp.T @ h2[:, p * sub_dim : (p + 1) * sub_dim]
    return (grad_h[0], grad_pool) if squeeze else (grad_h, grad_pool)


@dataclass
class NoiseTable:
    """Sampling distribution over word ids with a cumulative lookup."""

    probs: np.ndarray
    cumulative: np.ndarray = field(init=False)
    log_probs: np.ndarray = field(init=False)

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        self.cumulative = np.cumsum(self.probs)
        with np.errstate(divide="ignore"):
            self.log_probs = np.log(self.probs)

    def sample(self, rng: SplitMix64, shape) -> np.ndarray:
        """Seeded draws with replacement via binary search on the cumulative."""
        u = rng.float_array(shape) * self.cumulative[-1]
        ids = np.searchsorted(self.cumulative, u, side="right")
        return np.minimum(ids, len(self.probs) - 1)


def build_noise_table(counts: np.ndarray, power: float = 0.75) -> NoiseTable:
    """Noise distribution proportional to counts**power (smoothed unigram)."""
    counts = np.asarray(counts, dtype=np.float64)
    if counts.size == 0 or (counts <= 0).all():
        raise ValueError("noise table needs at least one positive count")
    if (counts < 0).any():
        raise ValueError("negative count")
    weights = counts**power
    return NoiseTable(weights / weights.sum())


def _gathered_logits(layer: OutputLayer, h: np.ndarray, words: np.ndarray) -> np.ndarray:
    """z_w for an explicit (batch, n_words) id array, touching only those rows."""
    sub_dim = layer.pool.sub_dim
    parts = layer.mapping.parts_per_word
    hs = h.reshape(h.shape[0], parts, sub_dim)
    rows = layer.mapping.table[words]  # (batch, n_words, K)
    vecs = layer.pool.data[rows]  # (batch, n_words, K, d)
    return np.einsum("bwkd,bkd->bw", vecs, hs)


def nce_loss(
    layer: OutputLayer,
    h: np.ndarray,
    target: int,
    noise: NoiseTable,
    num_noise: int,
    rng: SplitMix64,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Single-position NCE loss; see nce_loss_batch."""
    h = np.asarray(h, dtype=np.float64)
    loss, grad_h, grad_pool = nce_loss_batch(
        layer, h[None, :], np.array([target]), noise, num_noise, rng
    )
    return loss, grad_h[0], grad_pool


def nce_loss_batch(
    layer: OutputLayer,
    h: np.ndarray,
    targets: np.ndarray,
    noise: NoiseTable,
    num_noise: int,
    rng: SplitMix64,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Noise-contrastive loss summed over positions, with exact gradients.

    The model is treated as self-normalized with the partition frozen at
    V: its density for word w is exp(z_w) / V, so the near-zero initial
    scores already describe the uniform distribution.  (Freezing at 1
    instead is the textbook choice, but with no per-word output bias the
    model must then drag every score down by log V through shared dot
    products before the contrast carries any context signal -- on small
    corpora that calibration phase eats the entire training budget.)

    Each position draws its own `num_noise` ids from the noise table;
    with delta(w) = z_w - log V - log(k q(w)) the loss is
    -log sigmoid(delta(target)) - sum_i log sigmoid(-delta(x_i)).
    The shift is constant per vocabulary, so the optimum is the same
    softmax model either way.  Gradients touch only the K rows of each
    scored word, so one position updates at most (k+1) * K pool rows.
    """
    if num_noise < 1:
        raise ValueError("num_noise must be >= 1")
    h, _ = _as_batch(h, layer.hidden_dim)
    targets = np.asarray(targets, dtype=np.int64)
    if targets.size and (targets.min() < 0 or targets.max() >= layer.vocab_size):
        raise ValueError(f"target outside [0, {layer.vocab_size})")
    batch = h.shape[0]

    samples = noise.sample(rng, (batch, num_noise))
    words = np.concatenate([targets[:, None], samples], axis=1)  # (B, k+1)
    z = _gathered_logits(layer, h, words)
    delta = z - (np.log(num_noise * layer.vocab_size) + noise.log_probs[words])

    sign = np.full_like(delta, -1.0)
    sign[:, 0] = 1.0
    # -log sigmoid(sign * delta), stable via logaddexp
    losses = np.logaddexp(0.0, -sign * delta)
    # d loss / d z = sigmoid(delta) - 1 for the target, sigmoid(delta) for noise
    sig = 0.5 * (np.tanh(0.5 * delta) + 1.0)
    dz = sig.copy()
    dz[:, 0] -= 1.0

    parts = layer.mapping.parts_per_word
    sub_dim = layer.pool.sub_dim
    rows = layer.mapping.table[words]  # (B, k+1, K)
    vecs = layer.pool.data[rows]  # (B, k+1, K, d)
    grad_h = np.einsum("bw,bwkd->bkd", dz, vecs).reshape(batch, -1)

    grad_pool = np.zeros_like(layer.pool.data)
    hs = h.reshape(batch, parts, sub_dim)
    contrib = np.einsum("bw,bkd->bwkd", dz, hs)
    np.add.at(grad_pool, rows.reshape(-1), contrib.reshape(-1, sub_dim))
    return float(losses.sum()), grad_h, grad_pool
