"""Multi-layer LSTM with inverted dropout and exact reverse-mode BPTT.

Cell dynamics per layer, with n the hidden width and x the (already
dropout-masked) input from below:

    (i, f, o, g) = (sigm, sigm, sigm, tanh) of [x; h_prev] @ W + b
    c = f * c_prev + i * g
    h = o * tanh(c)

W is a fused (2n, 4n) matrix with gate columns ordered (i, f, o, g).
Dropout hits only non-recurrent connections: the embedded input to layer
0, each between-layer hand-off, and the top hidden states before the
output layer.  Masks use inverted scaling, entries in {0, 1/keep_prob},
so the evaluation path is mask-free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import SplitMix64


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


@dataclass
class LstmLayerParams:
    weight: np.ndarray  # (2n, 4n)
    bias: np.ndarray  # (4n,)

    def __post_init__(self):
        n = self.weight.shape[0] // 2
        if self.weight.shape != (2 * n, 4 * n) or self.bias.shape != (4 * n,):
            raise ValueError(
                f"bad LSTM parameter shapes {self.weight.shape}, {self.bias.shape}"
            )

    @property
    def hidden_dim(self) -> int:
        return self.weight.shape[0] // 2


@dataclass
class LstmState:
    """Per-layer (h, c) carried between windows; zeroed at epoch boundaries."""

    h: list[np.ndarray]
    c: list[np.ndarray]

    @classmethod
    def zeros(cls, layers: int, batch: int, hidden: int) -> "LstmState":
        return cls(
            [np.zeros((batch, hidden)) for _ in range(layers)],
            [np.zeros((batch, hidden)) for _ in range(layers)],
        )

    def copy(self) -> "LstmState":
        return LstmState([h.copy() for h in self.h], [c.copy() for c in self.c])


def lstm_cell_forward(
    params: LstmLayerParams,
    x: np.ndarray,
    h_prev: np.ndarray,
    c_prev: np.ndarray,
    mask: np.ndarray | None = None,
):
    """One cell step on a (batch, n) slab; returns (h, c, cache) for BPTT."""
    n = params.hidden_dim
    if x.shape[-1] != n or h_prev.shape != x.shape or c_prev.shape != x.shape:
        raise ValueError("LSTM input dimension mismatch")
    xd = x if mask is None else x * mask
    inp = np.concatenate([xd, h_prev], axis=-1)
    acts = inp @ params.weight + params.bias
    i = sigmoid(acts[..., :n])
    f = sigmoid(acts[..., n : 2 * n])
    o = sigmoid(acts[..., 2 * n : 3 * n])
    g = np.tanh(acts[..., 3 * n :])
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    cache = (params, mask, inp, c_prev, i, f, o, g, tanh_c)
    return h, c, cache


def lstm_cell_backward(cache, grad_h: np.ndarray, grad_c: np.ndarray):
    """Exact reverse of lstm_cell_forward.

    Returns (grad_x, grad_h_prev, grad_c_prev, grad_weight, grad_bias);
    grad_x is the derivative w.r.t. the pre-mask input.
    """
    params, mask, inp, c_prev, i, f, o, g, tanh_c = cache
    n = params.hidden_dim
    dc = grad_c + grad_h * o * (1.0 - tanh_c * tanh_c)
    d_acts = np.concatenate(
        [
            dc * g * i * (1.0 - i),
            dc * c_prev * f * (1.0 - f),
            grad_h * tanh_c * o * (1.0 - o),
            dc * i * (1.0 - g * g),
        ],
        axis=-1,
    )
    grad_weight = inp.T @ d_acts
    grad_bias = d_acts.sum(axis=0)
    d_inp = d_acts @ params.weight.T
    grad_xd = d_inp[..., :n]
    grad_h_prev = d_inp[..., n:]
    grad_x = grad_xd if mask is None else grad_xd * mask
    return grad_x, grad_h_prev, dc * f, grad_weight, grad_bias


def sample_dropout_masks(
    rng: SplitMix64,
    steps: int,
    batch: int,
    hidden: int,
    layers: int,
    p_embed: float,
    p_hidden: float,
) -> list[np.ndarray | None]:
    """Inverted-scaling masks for every non-recurrent site of one window.

    Site 0 masks the embedded input (probability p_embed); sites 1..L-1
    mask the between-layer hand-offs and site L the top hidden states
    (probability p_hidden).  A zero probability yields None (identity).
    """
    masks: list[np.ndarray | None] = []
    for site in range(layers + 1):
        p = p_embed if site == 0 else p_hidden
        if p == 0.0:
            masks.append(None)
        else:
            keep = 1.0 - p
            u = rng.float_array((steps, batch, hidden))
            masks.append((u >= p) / keep)
    return masks


def stack_forward(
    layers: list[LstmLayerParams],
    embedded: np.ndarray,
    state: LstmState,
    masks: list[np.ndarray | None] | None = None,
):
    """Run L layers over a (T, batch, n) window.

    Returns (top_hiddens, new_state, caches) where top_hiddens already
    carries the before-output dropout and new_state the raw final (h, c).
    """
    steps, batch, hidden = embedded.shape
    n_layers = len(layers)
    if masks is None:
        masks = [None] * (n_layers + 1)
    h = [state.h[l] for l in range(n_layers)]
    c = [state.c[l] for l in range(n_layers)]
    caches = []
    top = np.empty_like(embedded)
    for t in range(steps):
        x = embedded[t]
        step_caches = []
        for l, params in enumerate(layers):
            mask = None if masks[l] is None else masks[l][t]
            h[l], c[l], cache = lstm_cell_forward(params, x, h[l], c[l], mask)
            step_caches.append(cache)
            x = h[l]
        caches.append(step_caches)
        top[t] = x
    out_mask = masks[n_layers]
    if out_mask is not None:
        top = top * out_mask
    new_state = LstmState([hl.copy() for hl in h], [cl.copy() for cl in c])
    return top, new_state, (caches, out_mask)


def stack_backward(caches_and_mask, grad_top: np.ndarray):
    """Reverse of stack_forward over the window; state gradients truncate
    at the window boundary.  Returns (grad_embedded, [(gW, gb) per layer])."""
    caches, out_mask = caches_and_mask
    steps = len(caches)
    n_layers = len(caches[0])
    if out_mask is not None:
        grad_top = grad_top * out_mask
    grad_w = [np.zeros_like(caches[0][l][0].weight) for l in range(n_layers)]
    grad_b = [np.zeros_like(caches[0][l][0].bias) for l in range(n_layers)]
    dh = [np.zeros_like(grad_top[0]) for _ in range(n_layers)]
    dc = [np.zeros_like(grad_top[0]) for _ in range(n_layers)]
    grad_embedded = np.empty_like(grad_top)
    for t in reversed(range(steps)):
        dh[n_layers - 1] = dh[n_layers - 1] + grad_top[t]
        dx = None
        for l in reversed(range(n_layers)):
            if dx is not None:
                dh[l] = dh[l] + dx
            dx, dh[l], dc[l], gw, gb = lstm_cell_backward(caches[t][l], dh[l], dc[l])
            grad_w[l] += gw
            grad_b[l] += gb
        grad_embedded[t] = dx
    return grad_embedded, list(zip(grad_w, grad_b))
