"""Dense-matrix building blocks for a hand-written two-layer GCN.

Matrices are float64 numpy arrays.  Gradients are computed by hand; there is
no autodiff.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


class ShapeError(ValueError):
    pass


def _check_same(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shape {a.shape} != {b.shape}")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} x {b.shape}")
    return a @ b


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, grad: np.ndarray) -> np.ndarray:
    _check_same(x, grad, "relu_backward")
    return grad * (x > 0)


def softmax_rows(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def masked_cross_entropy(probs: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over ``mask`` and its gradient w.r.t. the logits.

    ``labels`` is indexed by node id.  An empty mask gives ``(0.0, zeros)``.
    """
    mask = np.asarray(mask, dtype=np.int64)
    grad = np.zeros_like(probs)
    if mask.size == 0:
        return 0.0, grad
    y = np.asarray(labels)[mask]
    picked = probs[mask, y]
    # clip guards log(0) when softmax underflows on a confidently wrong row
    loss = float(-np.mean(np.log(np.maximum(picked, 1e-300))))
    g = probs[mask].copy()
    g[np.arange(mask.size), y] -= 1.0
    grad[mask] = g / mask.size
    return loss, grad


def dropout(x, p: float, rng: np.random.Generator, training: bool):
    """Inverted dropout.  Returns ``(out, mask)`` with a 0/1 mask.

    ``x`` may be a scipy sparse matrix, in which case only stored entries are
    dropped and the mask has one entry per stored value.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    sparse_in = hasattr(x, "tocsr")
    vals = x.data if sparse_in else x
    if not training or p == 0.0:
        return x, np.ones(vals.shape)
    mask = (rng.random(vals.shape) >= p).astype(np.float64)
    return apply_dropout_mask(x, mask, p), mask


def apply_dropout_mask(x, mask: np.ndarray, p: float):
    if hasattr(x, "tocsr"):
        out = x.copy()
        out.data = x.data * mask / (1.0 - p)
        return out
    return x * mask / (1.0 - p)


@dataclass(frozen=True)
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    @classmethod
    def zeros_like(cls, param: np.ndarray, **hyper) -> AdamState:
        return cls(np.zeros_like(param), np.zeros_like(param), **hyper)


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState) -> tuple[np.ndarray, AdamState]:
    """Adam with bias correction and decoupled weight decay."""
    _check_same(param, grad, "adam_step")
    _check_same(param, state.first_moment, "adam_step moments")
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * (grad * grad)
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new = param
    if state.weight_decay:
        new = new * (1.0 - state.lr * state.weight_decay)
    new = new - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, replace(state, first_moment=m, second_moment=v, step_count=t)


def glorot_init(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    a = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-a, a, size=(rows, cols))
