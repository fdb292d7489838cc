"""LSTM cell and the bidirectional encoder built from it.

One step computes the usual gated update

    i, f, o = sigmoid(U x + W h_prev + b)
    g       = tanh(U_g x + W_g h_prev + b_g)
    c       = c_prev * f + g * i
    h       = tanh(c) * o

and the bidirectional pass concatenates the forward state with the
state of a second, independent cell run over the reversed sentence,
re-aligned so row t always describes original position t.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .autodiff import (
    Parameter,
    Tensor,
    _check_finite,
    _sigmoid,
    concat,
    current_dtype,
    record_op,
    row,
    stack_rows,
)


class LstmParams:
    """All weights of one directional cell, hidden size N over inputs of d.

    Input maps U_* are (N, d), recurrent maps W_* are (N, N), biases and
    the trainable initial states h0/c0 are length-N vectors. Matrices are
    drawn uniform(-1/sqrt(N), 1/sqrt(N)); vectors start at zero.
    """

    GATES = ("i", "f", "o", "g")

    def __init__(self, hidden: int, input_dim: int, rng: np.random.Generator,
                 name: str = "lstm"):
        self.hidden = hidden
        self.input_dim = input_dim
        bound = 1.0 / np.sqrt(hidden)
        dt = current_dtype()

        def mat(shape, label):
            data = rng.uniform(-bound, bound, size=shape).astype(dt)
            return Parameter(data, name=f"{name}.{label}")

        def vec(label):
            return Parameter(np.zeros(hidden, dtype=dt), name=f"{name}.{label}",
                             weight_decay=False)

        for gate in self.GATES:
            setattr(self, f"U_{gate}", mat((hidden, input_dim), f"U_{gate}"))
            setattr(self, f"W_{gate}", mat((hidden, hidden), f"W_{gate}"))
            setattr(self, f"b_{gate}", vec(f"b_{gate}"))
        self.h0 = vec("h0")
        self.c0 = vec("c0")

    def parameters(self) -> list[Parameter]:
        out = []
        for gate in self.GATES:
            out += [getattr(self, f"U_{gate}"), getattr(self, f"W_{gate}"),
                    getattr(self, f"b_{gate}")]
        out += [self.h0, self.c0]
        return out


class BiLstmStack:
    """A forward cell and an independent backward cell of equal size."""

    def __init__(self, hidden: int, input_dim: int, rng: np.random.Generator,
                 name: str = "bilstm"):
        self.hidden = hidden
        self.input_dim = input_dim
        self.fwd = LstmParams(hidden, input_dim, rng, name=f"{name}.fwd")
        self.bwd = LstmParams(hidden, input_dim, rng, name=f"{name}.bwd")

    def parameters(self) -> list[Parameter]:
        return self.fwd.parameters() + self.bwd.parameters()


def lstm_step(p: LstmParams, x: Tensor, h_prev: Tensor,
              c_prev: Tensor) -> tuple[Tensor, Tensor]:
    """One gated update; returns the new (h, c).

    The whole cell is one fused tape op with a hand-derived backward;
    spelling it out as a dozen primitive ops costs roughly 4x in Python
    overhead on the sequential inner loop. Since h and c feed different
    consumers, each gets its own record applying its slice of the cell
    Jacobian; the tape sums the two contributions.
    """
    xd, hd, cd = x.data, h_prev.data, c_prev.data
    i = _sigmoid(p.U_i.data @ xd + p.W_i.data @ hd + p.b_i.data)
    f = _sigmoid(p.U_f.data @ xd + p.W_f.data @ hd + p.b_f.data)
    o = _sigmoid(p.U_o.data @ xd + p.W_o.data @ hd + p.b_o.data)
    g = np.tanh(p.U_g.data @ xd + p.W_g.data @ hd + p.b_g.data)
    c_new = cd * f + g * i
    tanh_c = np.tanh(c_new)
    h_new = tanh_c * o
    _check_finite(c_new, "lstm_step")

    h_out = Tensor(h_new)
    c_out = Tensor(c_new)
    inputs = (x, h_prev, c_prev,
              p.U_i, p.W_i, p.b_i, p.U_f, p.W_f, p.b_f,
              p.U_o, p.W_o, p.b_o, p.U_g, p.W_g, p.b_g)
    u_i, w_i = p.U_i.data, p.W_i.data
    u_f, w_f = p.U_f.data, p.W_f.data
    u_o, w_o = p.U_o.data, p.W_o.data
    u_g, w_g = p.U_g.data, p.W_g.data

    def cell_grads(dc, do):
        a_i = (dc * g) * i * (1.0 - i)
        a_f = (dc * cd) * f * (1.0 - f)
        a_o = do * o * (1.0 - o)
        a_g = (dc * i) * (1.0 - g * g)
        dx = u_i.T @ a_i + u_f.T @ a_f + u_o.T @ a_o + u_g.T @ a_g
        dh = w_i.T @ a_i + w_f.T @ a_f + w_o.T @ a_o + w_g.T @ a_g
        return (dx, dh, dc * f,
                np.outer(a_i, xd), np.outer(a_i, hd), a_i,
                np.outer(a_f, xd), np.outer(a_f, hd), a_f,
                np.outer(a_o, xd), np.outer(a_o, hd), a_o,
                np.outer(a_g, xd), np.outer(a_g, hd), a_g)

    def backward_h(gh):
        return cell_grads(gh * o * (1.0 - tanh_c * tanh_c), gh * tanh_c)

    def backward_c(gc):
        return cell_grads(gc, np.zeros_like(gc))

    record_op(h_out, inputs, backward_h)
    record_op(c_out, inputs, backward_c)
    return h_out, c_out


def _true_length(total: int, mask: Optional[Sequence[bool]]) -> int:
    if mask is None:
        return total
    flags = list(mask)
    if len(flags) != total:
        raise ValueError(f"mask length {len(flags)} vs {total} rows")
    m = sum(1 for v in flags if v)
    if flags != [True] * m + [False] * (total - m):
        raise ValueError("padding mask must be True tokens then False padding")
    return m


def bilstm_forward(stack: BiLstmStack, X: Tensor,
                   mask: Optional[Sequence[bool]] = None) -> Tensor:
    """Encode an (L, d) input into (L, 2N) per-token features.

    Padded rows (mask False) are never fed through either cell and come
    out as exact zero rows, so a padded instance encodes identically to
    its unpadded self.
    """
    if X.data.ndim != 2:
        raise ValueError(f"expected (m, d) input, got shape {X.shape}")
    total = X.data.shape[0]
    m = _true_length(total, mask)
    if m == 0:
        raise ValueError("empty sequence: nothing to encode")

    xs = [row(X, t) for t in range(m)]

    h, c = stack.fwd.h0, stack.fwd.c0
    forward_states = []
    for t in range(m):
        h, c = lstm_step(stack.fwd, xs[t], h, c)
        forward_states.append(h)

    h, c = stack.bwd.h0, stack.bwd.c0
    backward_states: list[Tensor] = [None] * m
    for t in reversed(range(m)):
        h, c = lstm_step(stack.bwd, xs[t], h, c)
        backward_states[t] = h

    rows_out = [concat(forward_states[t], backward_states[t]) for t in range(m)]
    zero = Tensor(np.zeros(2 * stack.hidden, dtype=X.data.dtype))
    rows_out.extend(zero for _ in range(total - m))
    return stack_rows(rows_out)
