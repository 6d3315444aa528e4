"""Embedding tables, affine maps and the (Bi)LSTM encoders."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor_core as tc
from .errors import DegenerateInputError, ShapeError
from .tensor_core import Tensor

PAD_ID = 0
UNK_ID = 1


@dataclass
class EmbeddingTable:
    """Lookup table whose row 0 is the PAD vector and stays at zero."""

    table: Tensor
    trainable: bool = True

    @property
    def vocab_size(self) -> int:
        return self.table.rows

    @property
    def dim(self) -> int:
        return self.table.cols

    @classmethod
    def uniform(cls, vocab_size: int, dim: int, bound: float, rng: np.random.Generator,
                name: str, trainable: bool = True) -> "EmbeddingTable":
        values = rng.uniform(-bound, bound, size=(vocab_size, dim))
        values[PAD_ID] = 0.0
        return cls(Tensor(values, requires_grad=trainable, name=name), trainable)

    def reset_pad(self) -> None:
        self.table.value[PAD_ID] = 0.0


def embed_sequence(table: EmbeddingTable, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.intp).reshape(-1)
    if ids.size and (ids.min() < 0 or ids.max() >= table.vocab_size):
        bad = ids[(ids < 0) | (ids >= table.vocab_size)][0]
        raise IndexError(f"id {bad} out of range for table of size {table.vocab_size}")
    return tc.take_rows(table.table, ids)


def linear(w: Tensor, b: Tensor | None, x: Tensor) -> Tensor:
    out = tc.matmul(x, w)
    if b is None:
        return out
    if b.shape != (1, w.cols):
        raise ShapeError(f"linear: bias {b.shape} does not match weight {w.shape}")
    return tc.add(out, tc.repeat_rows(b, x.rows))


@dataclass
class LstmParams:
    """One LSTM direction with the four gates packed column-wise.

    Column blocks of ``w``, ``u`` and ``b`` are ordered input, forget, output,
    candidate, each ``hidden`` wide, so the three sigmoid gates are contiguous.
    """

    w: Tensor  # input_dim x 4H
    u: Tensor  # H x 4H
    b: Tensor  # 1 x 4H

    @property
    def hidden(self) -> int:
        return self.u.rows

    @property
    def input_dim(self) -> int:
        return self.w.rows

    def tensors(self) -> list[Tensor]:
        return [self.w, self.u, self.b]

    @classmethod
    def init(cls, input_dim: int, hidden: int, rng: np.random.Generator,
             name: str) -> "LstmParams":
        bound = 1.0 / np.sqrt(hidden)
        w = rng.uniform(-bound, bound, size=(input_dim, 4 * hidden))
        u = rng.uniform(-bound, bound, size=(hidden, 4 * hidden))
        b = rng.uniform(-bound, bound, size=(1, 4 * hidden))
        b[:, hidden:2 * hidden] = 1.0
        return cls(Tensor(w, True, f"{name}.w"), Tensor(u, True, f"{name}.u"),
                   Tensor(b, True, f"{name}.b"))


def _gates(p: LstmParams, z: Tensor, c_prev: Tensor | None) -> tuple[Tensor, Tensor]:
    hid = p.hidden
    sig = tc.sigmoid(tc.slice_cols(z, 0, 3 * hid))
    cand = tc.tanh(tc.slice_cols(z, 3 * hid, 4 * hid))
    i = tc.slice_cols(sig, 0, hid)
    o = tc.slice_cols(sig, 2 * hid, 3 * hid)
    c = tc.mul(i, cand)
    if c_prev is not None:
        f = tc.slice_cols(sig, hid, 2 * hid)
        c = tc.add(tc.mul(f, c_prev), c)
    h = tc.mul(o, tc.tanh(c))
    return h, c


def lstm_cell(p: LstmParams, x: Tensor, h_prev: Tensor, c_prev: Tensor) -> tuple[Tensor, Tensor]:
    """One recurrence step; returns ``(h, c)``."""
    if x.cols != p.input_dim or h_prev.shape != (x.rows, p.hidden) or c_prev.shape != h_prev.shape:
        raise ShapeError(
            f"lstm_cell: x {x.shape}, h {h_prev.shape}, c {c_prev.shape} "
            f"for input_dim={p.input_dim}, hidden={p.hidden}")
    z = tc.add(linear(p.w, p.b, x), tc.matmul(h_prev, p.u))
    return _gates(p, z, c_prev)


@dataclass
class BiLstm:
    forward: LstmParams
    backward: LstmParams

    @property
    def hidden(self) -> int:
        return self.forward.hidden

    def tensors(self) -> list[Tensor]:
        return self.forward.tensors() + self.backward.tensors()

    @classmethod
    def init(cls, input_dim: int, hidden: int, rng: np.random.Generator, name: str) -> "BiLstm":
        return cls(LstmParams.init(input_dim, hidden, rng, f"{name}.fwd"),
                   LstmParams.init(input_dim, hidden, rng, f"{name}.bwd"))


def _run_direction(p: LstmParams, xw: Tensor, n_seq: int, length: int,
                   mask: np.ndarray, steps) -> list[Tensor]:
    hid = p.hidden
    zeros = Tensor(np.zeros((n_seq, hid)))
    h = c = None
    outs: list[Tensor] = [zeros] * length
    for t in steps:
        valid = mask[:, t]
        if not valid.any():
            continue
        if n_seq == 1:
            xt = tc.slice_rows(xw, t, t + 1)
        else:
            xt = tc.take_rows(xw, np.arange(n_seq) * length + t)
        z = xt if h is None else tc.add(xt, tc.matmul(h, p.u))
        h_new, c_new = _gates(p, z, c)
        if valid.all():
            h, c = h_new, c_new
            outs[t] = h_new
        else:
            # padded sequences keep their previous state and emit a zero row
            h = tc.select_rows(valid, h_new, zeros if h is None else h)
            c = tc.select_rows(valid, c_new, zeros if c is None else c)
            outs[t] = tc.select_rows(valid, h_new, zeros)
    return outs


def bilstm_encode_many(b: BiLstm, x: Tensor, n_seq: int, mask) -> Tensor:
    """Encode ``n_seq`` equal-length sequences stacked sequence-major in ``x``.

    Returns a ``(n_seq*length) x 2H`` tensor in the same row layout where each
    row is ``[backward state ; forward state]`` and padded rows are zero.
    """
    mask = np.asarray(mask, dtype=bool).reshape(n_seq, -1)
    length = mask.shape[1]
    if x.rows != n_seq * length:
        raise ShapeError(f"bilstm: {x.rows} input rows for {n_seq} sequences of length {length}")
    if x.cols != b.forward.input_dim:
        raise ShapeError(f"bilstm: input width {x.cols}, encoder expects {b.forward.input_dim}")
    if not mask.any(axis=1).all():
        raise DegenerateInputError("bilstm: a sequence has no valid positions")

    fwd = _run_direction(b.forward, linear(b.forward.w, b.forward.b, x), n_seq, length,
                         mask, range(length))
    bwd = _run_direction(b.backward, linear(b.backward.w, b.backward.b, x), n_seq, length,
                         mask, range(length - 1, -1, -1))
    # time-major stacking, then reorder to sequence-major
    out = tc.concat_last(tc.stack_rows(bwd), tc.stack_rows(fwd))
    if n_seq == 1:
        return out
    order = (np.arange(length)[None, :] * n_seq + np.arange(n_seq)[:, None]).reshape(-1)
    return tc.take_rows(out, order)


def bilstm_encode(b: BiLstm, x: Tensor, mask=None) -> Tensor:
    """Encode one sequence: ``len x input_dim`` to ``len x 2H``."""
    if x.rows < 1:
        raise DegenerateInputError("bilstm: empty sequence")
    if mask is None:
        mask = np.ones(x.rows, dtype=bool)
    return bilstm_encode_many(b, x, 1, mask)
