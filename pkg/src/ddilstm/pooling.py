"""Collapse per-token encoder outputs into one fixed-length feature.

Max pooling keeps the per-dimension maximum over real tokens; attentive
pooling computes softmax weights from tanh-squashed features and returns
the weighted sum together with the weights themselves (kept around for
heatmap export).
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .autodiff import (
    Parameter,
    Tensor,
    current_dtype,
    matmul,
    record_op,
    softmax_vec,
    tanh,
)


class AttentionParams:
    """The scoring vector; its length equals the encoder output width."""

    def __init__(self, width: int, rng: np.random.Generator, name: str = "attention"):
        bound = 1.0 / np.sqrt(width)
        data = rng.uniform(-bound, bound, size=width).astype(current_dtype())
        self.w_a = Parameter(data, name=f"{name}.w_a")

    def parameters(self) -> list[Parameter]:
        return [self.w_a]


def _resolve_mask(n_rows: int, mask: Optional[Sequence[bool]]) -> np.ndarray:
    if mask is None:
        keep = np.ones(n_rows, dtype=bool)
    else:
        keep = np.asarray(mask, dtype=bool)
        if keep.shape != (n_rows,):
            raise ValueError(f"mask length {keep.shape} vs {n_rows} rows")
    if not keep.any():
        raise ValueError("all rows masked: nothing to pool")
    return keep


def max_pool(Z: Tensor, mask: Optional[Sequence[bool]] = None) -> Tensor:
    """Per-dimension maximum over unmasked rows of an (m, k) matrix.

    Gradient flows only to the winning row of each dimension, first
    occurrence on ties, so training stays deterministic.
    """
    if Z.data.ndim != 2:
        raise ValueError(f"expected (m, k) matrix, got {Z.shape}")
    keep = _resolve_mask(Z.data.shape[0], mask)
    visible = np.where(keep[:, None], Z.data, -np.inf)
    winners = np.argmax(visible, axis=0)
    cols = np.arange(Z.data.shape[1])
    out = Tensor(Z.data[winners, cols])
    shape = Z.data.shape

    def grad_fn(g):
        dz = np.zeros(shape, dtype=g.dtype)
        np.add.at(dz, (winners, cols), g)
        return (dz,)

    return record_op(out, (Z,), grad_fn)


def attentive_pool(Z: Tensor, p: AttentionParams,
                   mask: Optional[Sequence[bool]] = None) -> tuple[Tensor, Tensor]:
    """Softmax-weighted sum of rows; returns (pooled vector, weights).

    Scores are w_a . tanh(Z_t); masked rows get weight exactly 0 and the
    weights over real tokens form a probability vector.
    """
    if Z.data.ndim != 2:
        raise ValueError(f"expected (m, k) matrix, got {Z.shape}")
    keep = _resolve_mask(Z.data.shape[0], mask)
    scores = matmul(tanh(Z), p.w_a)
    alpha = softmax_vec(scores, mask=keep)
    pooled = matmul(alpha, Z)
    return pooled, alpha
