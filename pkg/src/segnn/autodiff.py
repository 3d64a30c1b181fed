"""Reverse-mode autodiff over dense 2-D float64 arrays and CSR matrices.

One Tape per forward pass. Operations record onto the active tape (see
`recording`); without an active tape they run pure, which is the evaluation
path. Backward walks the tape once in reverse recording order and deposits
gradients on every requires_grad leaf.
"""

from __future__ import annotations

import os
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .errors import SegnnError, ShapeError
from .sparse import CsrMatrix

# Debug hook: abort on the first non-finite value any op produces.
NAN_DEBUG = os.environ.get("SEGNN_NAN_DEBUG", "") == "1"


def _finite_check(arr: np.ndarray, where: str):
    if NAN_DEBUG and not np.all(np.isfinite(arr)):
        raise SegnnError(f"non-finite values produced by {where}")


class Tensor:
    """A 2-D float64 array plus autodiff bookkeeping."""

    __slots__ = ("values", "requires_grad", "grad")

    def __init__(self, values, requires_grad: bool = False):
        arr = np.array(values, dtype=np.float64, copy=True)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError("tensor", arr.shape)
        self.values = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeError("item", self.shape)
        return float(self.values[0, 0])

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class Parameter(Tensor):
    """A named trainable tensor."""

    __slots__ = ("name",)

    def __init__(self, values, name: str):
        super().__init__(values, requires_grad=True)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.shape})"


@dataclass
class _TapeEntry:
    output: Tensor
    inputs: tuple
    backward: object  # callable(grad_out, accumulate)


class Tape:
    """Recorded operations in forward order; backward visits them in reverse."""

    def __init__(self):
        self._entries: list[_TapeEntry] = []
        self._consumed = False

    def record(self, output: Tensor, inputs, backward_fn):
        self._entries.append(_TapeEntry(output, tuple(inputs), backward_fn))

    def backward(self, loss: Tensor):
        """Populate .grad on every requires_grad tensor reachable from `loss`."""
        if self._consumed:
            raise SegnnError("backward called twice on the same tape")
        if loss.shape != (1, 1):
            raise ShapeError("backward: loss must be scalar", loss.shape)
        produced = {id(e.output) for e in self._entries}
        if id(loss) not in produced:
            raise SegnnError("loss is detached from this tape")

        grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
        holders: dict[int, Tensor] = {id(loss): loss}

        def accumulate(t: Tensor, g: np.ndarray):
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + g
            else:
                grads[key] = np.array(g, dtype=np.float64)
                holders[key] = t

        for entry in reversed(self._entries):
            g = grads.pop(id(entry.output), None)
            holders.pop(id(entry.output), None)
            if g is None:
                continue
            _finite_check(g, "backward")
            entry.backward(g, accumulate)

        for key, g in grads.items():
            t = holders[key]
            if t.requires_grad:
                t.grad = g if t.grad is None else t.grad + g
        self._consumed = True
        self._entries.clear()


_ACTIVE_TAPES: list[Tape] = []


@contextmanager
def recording(tape: Tape | None = None):
    tape = tape if tape is not None else Tape()
    _ACTIVE_TAPES.append(tape)
    try:
        yield tape
    finally:
        _ACTIVE_TAPES.pop()


def _tape() -> Tape | None:
    return _ACTIVE_TAPES[-1] if _ACTIVE_TAPES else None


def _make(values: np.ndarray, inputs, backward_fn) -> Tensor:
    _finite_check(values, "forward")
    out = Tensor.__new__(Tensor)
    out.values = values
    out.requires_grad = any(t.requires_grad for t in inputs if isinstance(t, Tensor))
    out.grad = None
    tape = _tape()
    if tape is not None and out.requires_grad:
        tape.record(out, [t for t in inputs if isinstance(t, Tensor)], backward_fn)
    return out


# ---------------------------------------------------------------------------
# primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    av, bv = a.values, b.values

    def backward(g, acc):
        if a.requires_grad:
            acc(a, g @ bv.T)
        if b.requires_grad:
            acc(b, av.T @ g)

    return _make(av @ bv, (a, b), backward)


def spmm(a: CsrMatrix, x: Tensor) -> Tensor:
    """Sparse-dense product; the sparse operand is constant (never trained)."""
    if a.shape[1] != x.shape[0]:
        raise ShapeError("spmm", a.shape, x.shape)

    def backward(g, acc):
        if x.requires_grad:
            acc(x, a.transpose().matmul_dense(g))

    return _make(a.matmul_dense(x.values), (x,), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError("add", a.shape, b.shape)

    def backward(g, acc):
        if a.requires_grad:
            acc(a, g)
        if b.requires_grad:
            acc(b, g)

    return _make(a.values + b.values, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError("sub", a.shape, b.shape)

    def backward(g, acc):
        if a.requires_grad:
            acc(a, g)
        if b.requires_grad:
            acc(b, -g)

    return _make(a.values - b.values, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError("mul", a.shape, b.shape)
    av, bv = a.values, b.values

    def backward(g, acc):
        if a.requires_grad:
            acc(a, g * bv)
        if b.requires_grad:
            acc(b, g * av)

    return _make(av * bv, (a, b), backward)


def div(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError("div", a.shape, b.shape)
    av, bv = a.values, b.values

    def backward(g, acc):
        if a.requires_grad:
            acc(a, g / bv)
        if b.requires_grad:
            acc(b, -g * av / (bv * bv))

    return _make(av / bv, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    def backward(g, acc):
        if a.requires_grad:
            acc(a, g * c)

    return _make(a.values * c, (a,), backward)


def add_const(a: Tensor, c: float) -> Tensor:
    def backward(g, acc):
        if a.requires_grad:
            acc(a, g)

    return _make(a.values + c, (a,), backward)


def add_bias_row(x: Tensor, bias: Tensor) -> Tensor:
    """x (n, d) plus a (1, d) bias row broadcast over rows."""
    if bias.shape != (1, x.shape[1]):
        raise ShapeError("add_bias_row", x.shape, bias.shape)

    def backward(g, acc):
        if x.requires_grad:
            acc(x, g)
        if bias.requires_grad:
            acc(bias, g.sum(axis=0, keepdims=True))

    return _make(x.values + bias.values, (x, bias), backward)


def relu(x: Tensor) -> Tensor:
    mask = x.values > 0

    def backward(g, acc):
        if x.requires_grad:
            acc(x, g * mask)

    return _make(np.where(mask, x.values, 0.0), (x,), backward)


def prelu(x: Tensor, slope: Tensor) -> Tensor:
    """Parametric ReLU with one learnable scalar slope."""
    if slope.shape != (1, 1):
        raise ShapeError("prelu: slope must be scalar", slope.shape)
    mask = x.values > 0
    a = slope.values[0, 0]

    def backward(g, acc):
        if x.requires_grad:
            acc(x, g * np.where(mask, 1.0, a))
        if slope.requires_grad:
            acc(slope, np.array([[np.sum(g * np.where(mask, 0.0, x.values))]]))

    return _make(np.where(mask, x.values, a * x.values), (x, slope), backward)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(x.values)

    def backward(g, acc):
        if x.requires_grad:
            acc(x, g * s * (1.0 - s))

    return _make(s, (x,), backward)


def sqrt(x: Tensor) -> Tensor:
    s = np.sqrt(x.values)

    def backward(g, acc):
        if x.requires_grad:
            acc(x, g * 0.5 / s)

    return _make(s, (x,), backward)


def concat_cols(parts: list[Tensor]) -> Tensor:
    rows = parts[0].shape[0]
    for p in parts[1:]:
        if p.shape[0] != rows:
            raise ShapeError("concat_cols", parts[0].shape, p.shape)
    widths = [p.shape[1] for p in parts]
    offsets = np.cumsum([0] + widths)

    def backward(g, acc):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                acc(p, g[:, lo:hi])

    return _make(np.hstack([p.values for p in parts]), tuple(parts), backward)


def sum_rows(x: Tensor) -> Tensor:
    """Collapse the row dimension: (n, d) -> (1, d)."""
    n = x.shape[0]

    def backward(g, acc):
        if x.requires_grad:
            acc(x, np.broadcast_to(g, (n, x.shape[1])).copy())

    return _make(x.values.sum(axis=0, keepdims=True), (x,), backward)


def mean_rows(x: Tensor) -> Tensor:
    n = x.shape[0]

    def backward(g, acc):
        if x.requires_grad:
            acc(x, np.broadcast_to(g / n, (n, x.shape[1])).copy())

    return _make(x.values.mean(axis=0, keepdims=True), (x,), backward)


def sum_cols(x: Tensor) -> Tensor:
    """Collapse the column dimension: (n, d) -> (n, 1)."""
    d = x.shape[1]

    def backward(g, acc):
        if x.requires_grad:
            acc(x, np.broadcast_to(g, (x.shape[0], d)).copy())

    return _make(x.values.sum(axis=1, keepdims=True), (x,), backward)


def _segment_starts(segments: np.ndarray, n_segments: int) -> np.ndarray:
    return np.searchsorted(segments, np.arange(n_segments))


def segment_sum_rows(x: Tensor, segments: np.ndarray, n_segments: int) -> Tensor:
    """Per-segment row sums; segments must be sorted (nodes grouped per graph)."""
    segments = np.asarray(segments, dtype=np.int64)
    if len(segments) != x.shape[0]:
        raise ShapeError("segment_sum_rows", x.shape, (len(segments),))
    if len(segments) and np.any(np.diff(segments) < 0):
        raise ValueError("segments must be nondecreasing")
    out = np.zeros((n_segments, x.shape[1]))
    counts = np.bincount(segments, minlength=n_segments)
    nonempty = counts > 0
    if x.shape[0]:
        starts = _segment_starts(segments, n_segments)
        out[nonempty] = np.add.reduceat(x.values, starts[nonempty], axis=0)

    def backward(g, acc):
        if x.requires_grad:
            acc(x, g[segments])

    return _make(out, (x,), backward)


def segment_mean_rows(x: Tensor, segments: np.ndarray, n_segments: int) -> Tensor:
    segments = np.asarray(segments, dtype=np.int64)
    counts = np.bincount(segments, minlength=n_segments)
    if np.any(counts == 0):
        raise ValueError("segment_mean_rows: empty segment")
    total = segment_sum_rows(Tensor(x.values), segments, n_segments)  # pure values
    out = total.values / counts[:, None]

    def backward(g, acc):
        if x.requires_grad:
            acc(x, g[segments] / counts[segments, None])

    return _make(out, (x,), backward)


def bce_loss(logits: Tensor, targets: Tensor) -> Tensor:
    """Mean binary cross-entropy on logits, in the stable softplus form."""
    if logits.shape != targets.shape or logits.shape[1] != 1:
        raise ShapeError("bce_loss", logits.shape, targets.shape)
    z, y = logits.values, targets.values
    n = z.shape[0]
    per = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    value = np.array([[per.mean()]])

    def backward(g, acc):
        if logits.requires_grad:
            acc(logits, g[0, 0] * (_sigmoid(z) - y) / n)

    return _make(value, (logits, targets), backward)


# ---------------------------------------------------------------------------
# batch-norm primitive (stateful running statistics live outside the tape)


@dataclass
class BatchNormState:
    """Running statistics; frozen at evaluation time."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    @classmethod
    def initial(cls, width: int) -> "BatchNormState":
        return cls(running_mean=np.zeros((1, width)), running_var=np.ones((1, width)))


def batchnorm(
    x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState, training: bool
) -> Tensor:
    """Per-feature normalization over the rows of x (the nodes of the batch)."""
    if gamma.shape != (1, x.shape[1]) or beta.shape != (1, x.shape[1]):
        raise ShapeError("batchnorm", x.shape, gamma.shape, beta.shape)
    if training:
        mu = x.values.mean(axis=0, keepdims=True)
        var = x.values.var(axis=0, keepdims=True)
        state.running_mean = (
            1.0 - state.momentum
        ) * state.running_mean + state.momentum * mu
        state.running_var = (
            1.0 - state.momentum
        ) * state.running_var + state.momentum * var
    else:
        mu = state.running_mean
        var = state.running_var
    inv_std = 1.0 / np.sqrt(var + state.eps)
    xhat = (x.values - mu) * inv_std
    out = gamma.values * xhat + beta.values
    n = x.shape[0]

    def backward(g, acc):
        if gamma.requires_grad:
            acc(gamma, (g * xhat).sum(axis=0, keepdims=True))
        if beta.requires_grad:
            acc(beta, g.sum(axis=0, keepdims=True))
        if x.requires_grad:
            gx = g * gamma.values
            if training:
                acc(
                    x,
                    inv_std
                    * (
                        gx
                        - gx.mean(axis=0, keepdims=True)
                        - xhat * (gx * xhat).mean(axis=0, keepdims=True)
                    ),
                )
            else:
                acc(x, gx * inv_std)

    return _make(out, (x, gamma, beta), backward)


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    """Per-parameter moment buffers keyed by parameter identity."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: list[Parameter], state: AdamState, lr: float):
    """Standard bias-corrected Adam update; a missing grad counts as zero."""
    state.step += 1
    t = state.step
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.values)
        key = id(p)
        m = state.m.get(key)
        if m is None:
            m = np.zeros_like(p.values)
            state.v[key] = np.zeros_like(p.values)
        v = state.v[key]
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[key] = m
        state.v[key] = v
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        p.values = p.values - lr * m_hat / (np.sqrt(v_hat) + state.eps)


def zero_grads(params: list[Parameter]):
    for p in params:
        p.grad = None
