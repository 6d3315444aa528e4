"""Minimal reverse-mode automatic differentiation over dense 2-D float64 arrays.

Operations are recorded define-by-run onto the innermost active :class:`Tape`.
Outside a tape, ops compute values only, which is what inference and
finite-difference evaluation use.

    >>> w = Tensor([[2.0]], requires_grad=True)
    >>> with Tape() as tape:
    ...     loss = sum_all(mul(w, w))
    >>> backward(loss, tape)
    >>> float(w.grad[0, 0])
    4.0
"""
from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .errors import ContractError, DegenerateInputError, EvaluationError, ShapeError

__all__ = [
    "Tensor", "Tape", "backward", "grad_check", "zero_grad", "constant",
    "matmul", "add", "mul", "scale", "tanh", "sigmoid", "elementwise",
    "concat_last", "softmax_columns", "mean_rows", "flatten_row_major",
    "stack_rows", "transpose", "take_rows", "slice_rows", "slice_cols",
    "repeat_rows", "select_rows", "sum_all", "bce_with_logits",
    "binary_cross_entropy", "PROB_CLAMP",
]

PROB_CLAMP = 1e-12



class _TapeStack(threading.local):
    def __init__(self):
        self.stack: list = []


_state = _TapeStack()


class Tensor:
    """2-D float64 value with an optional accumulated gradient."""

    __slots__ = ("value", "grad", "requires_grad", "name", "_tracked")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        v = np.array(value, dtype=np.float64)
        if v.ndim == 0:
            v = v.reshape(1, 1)
        elif v.ndim == 1:
            v = v.reshape(1, -1)
        elif v.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got shape {v.shape}")
        self.value = v
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(v) if requires_grad else None
        self.name = name
        self._tracked = requires_grad

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    def item(self) -> float:
        if self.value.shape != (1, 1):
            raise ContractError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.value[0, 0])

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"


def constant(value) -> Tensor:
    return Tensor(value)


class _Node:
    __slots__ = ("out", "parents", "backward")

    def __init__(self, out, parents, backward):
        self.out = out
        self.parents = parents
        self.backward = backward


class Tape:
    """Ordered record of the operations of one forward pass."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        _state.stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _state.stack.pop()

    def __len__(self) -> int:
        return len(self.nodes)


def _active_tape() -> Tape | None:
    stack = _state.stack
    return stack[-1] if stack else None


def _result(value: np.ndarray, parents: tuple, backward_fn: Callable) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.value = value
    out.grad = None
    out.requires_grad = False
    out.name = None
    stack = _state.stack
    if stack and any(p._tracked for p in parents):
        out._tracked = True
        stack[-1].nodes.append(_Node(out, parents, backward_fn))
    else:
        out._tracked = False
    return out


def _same_shape(kind: str, a: Tensor, b: Tensor) -> None:
    if a.value.shape != b.value.shape:
        raise ShapeError(f"{kind}: shapes {a.shape} and {b.shape} differ")


def zero_grad(tensors: Sequence[Tensor]) -> None:
    for t in tensors:
        if t.grad is not None:
            t.grad[...] = 0.0


# ---------------------------------------------------------------- algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    av, bv = a.value, b.value
    return _result(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return _result(a.value + b.value, (a, b), lambda g: (g, g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    av, bv = a.value, b.value
    return _result(av * bv, (a, b), lambda g: (g * bv, g * av))


def scale(a: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    return _result(a.value * factor, (a,), lambda g: (g * factor,))


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.value)
    return _result(t, (a,), lambda g: (g * (1.0 - t * t),))


_sigmoid = expit


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.value)
    return _result(s, (a,), lambda g: (g * s * (1.0 - s),))


_ELEMENTWISE = {"tanh": tanh, "sigmoid": sigmoid, "add": add, "mul": mul, "scale": scale}


def elementwise(kind: str, *operands) -> Tensor:
    """Dispatch by name: ``elementwise("mul", a, b)``, ``elementwise("scale", a, 2.0)``."""
    try:
        fn = _ELEMENTWISE[kind]
    except KeyError:
        raise ContractError(f"unknown elementwise kind {kind!r}") from None
    return fn(*operands)


# ---------------------------------------------------------- restructuring

def concat_last(a: Tensor, b: Tensor) -> Tensor:
    if a.value.shape[0] != b.value.shape[0]:
        raise ShapeError(f"concat_last: row counts differ, {a.shape} vs {b.shape}")
    p = a.value.shape[1]
    return _result(np.concatenate([a.value, b.value], axis=1), (a, b),
                   lambda g: (g[:, :p], g[:, p:]))


def flatten_row_major(a: Tensor) -> Tensor:
    shape = a.value.shape
    return _result(a.value.reshape(1, -1), (a,), lambda g: (g.reshape(shape),))


def stack_rows(parts: Sequence[Tensor]) -> Tensor:
    """Stack tensors vertically. Usually 1xc rows, but any row counts are accepted."""
    if not parts:
        raise ShapeError("stack_rows: empty list")
    width = parts[0].value.shape[1]
    for p in parts:
        if p.value.shape[1] != width:
            raise ShapeError(f"stack_rows: widths differ, {parts[0].shape} vs {p.shape}")
    bounds = np.cumsum([0] + [p.value.shape[0] for p in parts])

    def bwd(g):
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(parts)))

    return _result(np.vstack([p.value for p in parts]), tuple(parts), bwd)


def transpose(a: Tensor) -> Tensor:
    return _result(a.value.T.copy(), (a,), lambda g: (g.T,))


def take_rows(a: Tensor, index) -> Tensor:
    """Gather rows by integer index; repeated indices accumulate on backward."""
    idx = np.asarray(index, dtype=np.intp).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= a.value.shape[0]):
        raise IndexError(f"take_rows: index out of range for {a.value.shape[0]} rows")
    shape = a.value.shape

    def bwd(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _result(a.value[idx], (a,), bwd)


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    shape = a.value.shape

    def bwd(g):
        out = np.zeros(shape)
        out[start:stop] = g
        return (out,)

    return _result(a.value[start:stop], (a,), bwd)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    shape = a.value.shape

    def bwd(g):
        out = np.zeros(shape)
        out[:, start:stop] = g
        return (out,)

    return _result(a.value[:, start:stop], (a,), bwd)


def repeat_rows(a: Tensor, times: int) -> Tensor:
    if a.value.shape[0] != 1:
        raise ShapeError(f"repeat_rows: expected a single row, got {a.shape}")
    return _result(np.repeat(a.value, times, axis=0), (a,),
                   lambda g: (g.sum(axis=0, keepdims=True),))


def select_rows(mask, a: Tensor, b: Tensor) -> Tensor:
    """Row i comes from ``a`` where ``mask[i]`` is true, else from ``b``."""
    _same_shape("select_rows", a, b)
    m = np.asarray(mask, dtype=bool).reshape(-1, 1)
    if m.shape[0] != a.value.shape[0]:
        raise ShapeError(f"select_rows: mask length {m.shape[0]} for {a.value.shape[0]} rows")
    return _result(np.where(m, a.value, b.value), (a, b),
                   lambda g: (np.where(m, g, 0.0), np.where(m, 0.0, g)))


# --------------------------------------------------------------- reductions

def _row_mask(mask, rows: int, op: str) -> np.ndarray:
    if mask is None:
        m = np.ones(rows, dtype=bool)
    else:
        m = np.asarray(mask, dtype=bool).reshape(-1)
        if m.shape[0] != rows:
            raise ShapeError(f"{op}: mask length {m.shape[0]} for {rows} rows")
    if not m.any():
        raise DegenerateInputError(f"{op}: every row is masked")
    return m


def softmax_columns(a: Tensor, mask=None) -> Tensor:
    """Softmax down each column over the valid rows; masked rows get exactly 0."""
    if a.value.shape[0] < 1:
        raise DegenerateInputError("softmax_columns: no rows")
    m = _row_mask(mask, a.value.shape[0], "softmax_columns")
    col = m[:, None]
    peak = np.where(col, a.value, -np.inf).max(axis=0, keepdims=True)
    e = np.where(col, np.exp(np.where(col, a.value - peak, 0.0)), 0.0)
    s = e / e.sum(axis=0, keepdims=True)

    def bwd(g):
        return (s * (g - (g * s).sum(axis=0, keepdims=True)),)

    return _result(s, (a,), bwd)


def mean_rows(a: Tensor, mask=None) -> Tensor:
    m = _row_mask(mask, a.value.shape[0], "mean_rows")
    count = int(m.sum())
    shape = a.value.shape

    def bwd(g):
        out = np.zeros(shape)
        out[m] = g / count
        return (out,)

    return _result(a.value[m].sum(axis=0, keepdims=True) / count, (a,), bwd)


def sum_all(a: Tensor) -> Tensor:
    shape = a.value.shape
    return _result(a.value.sum().reshape(1, 1), (a,), lambda g: (np.full(shape, g[0, 0]),))


# ------------------------------------------------------------------ losses

def _check_label(y) -> float:
    if y not in (0, 1):
        raise ContractError(f"label must be 0 or 1, got {y!r}")
    return float(y)


def bce_with_logits(logit: Tensor, y) -> Tensor:
    """Cross-entropy of sigmoid(logit) against y, probability clamped to [1e-12, 1-1e-12].

    Gradient wrt the logit is ``sigmoid(logit) - y`` until the clamp engages.
    """
    if logit.value.shape != (1, 1):
        raise ShapeError(f"bce_with_logits: expected a 1x1 logit, got {logit.shape}")
    y = _check_label(y)
    z = float(logit.value[0, 0])
    lo, hi = np.log(PROB_CLAMP), np.log1p(-PROB_CLAMP)
    log_p = min(max(-np.logaddexp(0.0, -z), lo), hi)
    log_q = min(max(-np.logaddexp(0.0, z), lo), hi)
    loss = -(y * log_p + (1.0 - y) * log_q)
    p = float(_sigmoid(np.array(z)))
    clamped = not (PROB_CLAMP < p < 1.0 - PROB_CLAMP)
    dz = 0.0 if clamped else p - y
    return _result(np.array([[loss]]), (logit,), lambda g: (g * dz,))


def binary_cross_entropy(prob: Tensor, y) -> Tensor:
    if prob.value.shape != (1, 1):
        raise ShapeError(f"binary_cross_entropy: expected 1x1, got {prob.shape}")
    y = _check_label(y)
    p = float(prob.value[0, 0])
    pc = min(max(p, PROB_CLAMP), 1.0 - PROB_CLAMP)
    loss = -(y * np.log(pc) + (1.0 - y) * np.log1p(-pc))
    dp = 0.0 if pc != p else (pc - y) / (pc * (1.0 - pc))
    return _result(np.array([[loss]]), (prob,), lambda g: (g * dp,))


# ---------------------------------------------------------------- backward

def backward(loss: Tensor, tape: Tape) -> None:
    """Accumulate d(loss)/d(t) into ``t.grad`` for every reachable requires_grad tensor.

    Intermediate gradients live only for the duration of the call, so running
    backward twice on one tape adds the same leaf gradients twice.
    """
    if loss.value.shape != (1, 1):
        raise ContractError(f"backward needs a scalar (1x1) loss, got {loss.shape}")
    if loss.requires_grad:
        loss.grad += 1.0
        return
    if not loss._tracked:
        return
    if not tape.nodes or tape.nodes[-1].out is not loss:
        raise ContractError("loss must be the last node recorded on the tape")

    pending = {id(loss): np.ones((1, 1))}
    leaves: dict[int, list] = {}
    for node in reversed(tape.nodes):
        g = pending.pop(id(node.out), None)
        if g is None:
            continue
        for parent, pg in zip(node.parents, node.backward(g)):
            if pg is None or not parent._tracked:
                continue
            key = id(parent)
            if parent.requires_grad:
                slot = leaves.get(key)
                if slot is None:
                    leaves[key] = [parent, pg]
                else:
                    slot[1] = slot[1] + pg
            else:
                prev = pending.get(key)
                pending[key] = pg if prev is None else prev + pg
    for parent, total in leaves.values():
        parent.grad += total


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5) -> float:
    """Max relative error between backprop and central differences over every coordinate.

    ``f`` takes no arguments and must rebuild its scalar output from the current
    values of ``params``; it is called once under a tape and twice per coordinate
    without one. Relative error is ``|a-n| / max(1e-8, |a|+|n|)``.
    """
    if eps <= 0:
        raise ContractError("eps must be positive")
    for p in params:
        if not p.requires_grad:
            raise ContractError(f"{p!r} does not require grad")
    saved = [p.grad.copy() if p.grad is not None else None for p in params]
    for p in params:
        p.grad = np.zeros_like(p.value)
    with Tape() as tape:
        out = f()
    backward(out, tape)
    analytic = [p.grad.copy() for p in params]
    for p, g in zip(params, saved):
        p.grad = g

    def evaluate() -> float:
        v = f().item()
        if not np.isfinite(v):
            raise EvaluationError("function under check returned a non-finite value")
        return v

    worst = 0.0
    for p, ana in zip(params, analytic):
        flat = p.value.reshape(-1)
        grad = ana.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = evaluate()
            flat[i] = orig - eps
            down = evaluate()
            flat[i] = orig
            numeric = (up - down) / (2.0 * eps)
            err = abs(grad[i] - numeric) / max(1e-8, abs(grad[i]) + abs(numeric))
            worst = max(worst, err)
    return worst
