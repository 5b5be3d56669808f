"""Two-layer GCN: ``softmax(A relu(A X W1) W2)`` with manual gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nn
from .graph import SparseGraph, spmm


@dataclass
class GcnModel:
    w1: np.ndarray
    w2: np.ndarray
    adam1: nn.AdamState
    adam2: nn.AdamState
    dropout_p: float
    rng: np.random.Generator
    input_dropout: bool = True
    # L2 coefficient added to the W1 gradient; zero when decay is decoupled inside Adam
    l2: float = 0.0

    @property
    def num_classes(self) -> int:
        return self.w2.shape[1]


@dataclass
class ForwardCache:
    x_in: object
    z1: np.ndarray
    h1: np.ndarray
    h1_drop: np.ndarray
    h1_mask: np.ndarray
    x_mask: np.ndarray
    ah1: np.ndarray
    z2: np.ndarray
    probs: np.ndarray
    training: bool


def make_model(in_dim: int, hidden: int, num_classes: int, init_rng: np.random.Generator,
               dropout_rng: np.random.Generator, *, lr: float = 0.01, weight_decay: float = 5e-4,
               dropout_p: float = 0.5, input_dropout: bool = True,
               weight_decay_mode: str = "decoupled") -> GcnModel:
    if weight_decay_mode not in ("decoupled", "l2"):
        raise ValueError(f"unknown weight_decay_mode {weight_decay_mode!r}")
    decoupled = weight_decay_mode == "decoupled"
    w1 = nn.glorot_init(in_dim, hidden, init_rng)
    w2 = nn.glorot_init(hidden, num_classes, init_rng)
    return GcnModel(
        w1=w1,
        w2=w2,
        adam1=nn.AdamState.zeros_like(w1, lr=lr, weight_decay=weight_decay if decoupled else 0.0),
        adam2=nn.AdamState.zeros_like(w2, lr=lr, weight_decay=0.0),
        dropout_p=dropout_p,
        rng=dropout_rng,
        input_dropout=input_dropout,
        l2=0.0 if decoupled else weight_decay,
    )


def forward(model: GcnModel, g: SparseGraph, x, training: bool,
            masks: tuple[np.ndarray, np.ndarray] | None = None) -> ForwardCache:
    """Run the network.  ``masks`` freezes the (input, hidden) dropout masks."""
    if x.shape[0] != g.num_nodes or x.shape[1] != model.w1.shape[0]:
        raise nn.ShapeError(f"features {x.shape} incompatible with graph/model")
    p = model.dropout_p
    use_p = p if training else 0.0
    if masks is not None and training:
        x_mask, h_mask = masks
        x_in = nn.apply_dropout_mask(x, x_mask, p) if model.input_dropout else x
    else:
        if model.input_dropout:
            x_in, x_mask = nn.dropout(x, use_p, model.rng, training)
        else:
            x_in, x_mask = x, None
        h_mask = None

    z1 = spmm(g, np.asarray(x_in @ model.w1))
    h1 = nn.relu(z1)
    if h_mask is None:
        h1_drop, h_mask = nn.dropout(h1, use_p, model.rng, training)
    else:
        h1_drop = nn.apply_dropout_mask(h1, h_mask, p)
    ah1 = spmm(g, h1_drop)
    z2 = ah1 @ model.w2
    return ForwardCache(x_in, z1, h1, h1_drop, h_mask, x_mask, ah1, z2, nn.softmax_rows(z2), training)


def backward(model: GcnModel, g: SparseGraph, cache: ForwardCache,
             grad_logits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if grad_logits.shape != cache.z2.shape or cache.ah1.shape[1] != model.w2.shape[0]:
        raise nn.ShapeError("cache does not match model / gradient")
    grad_w2 = cache.ah1.T @ grad_logits
    grad_h1 = spmm(g, grad_logits) @ model.w2.T
    if cache.training:
        grad_h1 = nn.apply_dropout_mask(grad_h1, cache.h1_mask, model.dropout_p)
    grad_z1 = nn.relu_backward(cache.z1, grad_h1)
    # A is symmetric, so (A x)^T g == x^T (A g)
    grad_w1 = np.asarray(cache.x_in.T @ spmm(g, grad_z1))
    return grad_w1, grad_w2


def train_step(model: GcnModel, g: SparseGraph, x, labels: np.ndarray, mask: np.ndarray) -> float:
    """One forward/backward/Adam update on ``mask``.  Returns the pre-step loss."""
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        return 0.0
    cache = forward(model, g, x, training=True)
    loss, grad_logits = nn.masked_cross_entropy(cache.probs, labels, mask)
    grad_w1, grad_w2 = backward(model, g, cache, grad_logits)
    if model.l2:
        grad_w1 = grad_w1 + model.l2 * model.w1
    model.w1, model.adam1 = nn.adam_step(model.w1, grad_w1, model.adam1)
    model.w2, model.adam2 = nn.adam_step(model.w2, grad_w2, model.adam2)
    return loss


def predict(model: GcnModel, g: SparseGraph, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Eval-mode ``(labels, confidence, probs)``; ties go to the lowest class."""
    probs = forward(model, g, x, training=False).probs
    return probs.argmax(axis=1), probs.max(axis=1), probs


def hidden_embeddings(model: GcnModel, g: SparseGraph, x) -> np.ndarray:
    return forward(model, g, x, training=False).h1
