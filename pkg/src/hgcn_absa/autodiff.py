"""Dense-tensor reverse-mode automatic differentiation on a recorded tape.

All model math runs on double-precision numpy arrays wrapped in `Tensor`.
Operations executed while a `Tape` is active append a record with a local
backward closure; `Tape.backward` replays the records in reverse. Execution
order is topological by construction (an operation's inputs exist before it
runs), so one reverse sweep visits every record exactly once.

Broadcasting is deliberately limited: `add` and `mul` accept equal shapes, a
scalar operand, or a trailing-shape operand replicated over leading axes.
Anything fancier is a shape error, not a silent numpy broadcast.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes do not conform for a primitive."""


def _shape_error(op: str, *shapes: tuple) -> ShapeError:
    return ShapeError(f"{op}: incompatible shapes {' and '.join(str(s) for s in shapes)}")


class Tensor:
    """A double-precision array with an optional accumulated gradient."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Convenience operators; all dispatch through the module-level primitives
    # so everything lands on the active tape.
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


class _Record:
    """One primitive on the tape: its output and per-input pull closures."""

    __slots__ = ("out", "pulls")

    def __init__(self, out: Tensor, pulls: list[tuple[Tensor, Callable[[np.ndarray], np.ndarray]]]):
        self.out = out
        self.pulls = pulls


class _TapeStack(threading.local):
    def __init__(self):
        self.stack: list["Tape"] = []


_ACTIVE = _TapeStack()


class Tape:
    """Ordered record of primitive operations for one reverse sweep.

    Use as a context manager around a forward computation::

        with Tape() as tape:
            loss = build_loss(...)
            tape.backward(loss)

    Each `backward` call computes a fresh gradient of the given scalar and
    adds it into `Tensor.grad`, so repeated calls accumulate (two calls on
    the same tape exactly double the gradients). The active-tape stack is
    thread-local: tapes on different threads never see each other, but
    accumulating gradients into shared parameters is not synchronized.
    """

    def __init__(self):
        self._records: list[_Record] = []

    def __enter__(self) -> "Tape":
        _ACTIVE.stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _ACTIVE.stack.pop()
        assert popped is self

    def __len__(self) -> int:
        return len(self._records)

    def _append(self, record: _Record) -> None:
        self._records.append(record)

    def backward(self, loss: Tensor) -> None:
        if loss.data.size != 1:
            raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")
        # Pass-local gradients keyed by tensor identity; only the final
        # per-tensor value is added into .grad, which keeps repeated
        # backward calls exactly additive.
        flowing: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        holders: dict[int, Tensor] = {id(loss): loss}
        for record in reversed(self._records):
            g = flowing.pop(id(record.out), None)
            if g is None:
                continue
            if record.out.requires_grad:
                _accumulate(record.out, g)
            for inp, pull in record.pulls:
                contribution = pull(g)
                key = id(inp)
                if key in flowing:
                    flowing[key] = flowing[key] + contribution
                else:
                    flowing[key] = contribution
                    holders[key] = inp
        # Whatever is left belongs to leaves (tensors never produced by a
        # recorded op on this tape).
        for key, g in flowing.items():
            leaf = holders[key]
            if leaf.requires_grad:
                _accumulate(leaf, g)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad = t.grad + g


def _record(out: Tensor, pulls: list[tuple[Tensor, Callable[[np.ndarray], np.ndarray]]]) -> Tensor:
    if _ACTIVE.stack and any(inp.requires_grad for inp, _ in pulls):
        out.requires_grad = True
        _ACTIVE.stack[-1]._append(_Record(out, pulls))
    return out


def _sum_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a gradient over the leading axes it was broadcast along."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    return grad


def _leading_compatible(a: tuple[int, ...], b: tuple[int, ...]) -> bool:
    """True if b is a trailing suffix of a (leading-axis broadcast) or scalar."""
    if b == ():
        return True
    return len(b) <= len(a) and a[len(a) - len(b):] == b


# ---------------------------------------------------------------------------
# primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        if _leading_compatible(a.shape, b.shape):
            pass
        elif _leading_compatible(b.shape, a.shape):
            a, b = b, a
        else:
            raise _shape_error("add", a.shape, b.shape)
    out = Tensor(a.data + b.data)
    return _record(out, [(a, lambda g: _sum_to(g, a.shape)),
                         (b, lambda g: _sum_to(g, b.shape))])


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, scale(b, -1.0))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        if _leading_compatible(a.shape, b.shape):
            pass
        elif _leading_compatible(b.shape, a.shape):
            a, b = b, a
        else:
            raise _shape_error("mul", a.shape, b.shape)
    out = Tensor(a.data * b.data)
    ad, bd = a.data, b.data
    return _record(out, [(a, lambda g: _sum_to(g * bd, a.shape)),
                         (b, lambda g: _sum_to(g * ad, b.shape))])


def scale(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data * c)
    return _record(out, [(a, lambda g: g * c)])


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim == 0 or b.data.ndim == 0 or a.data.ndim > 2 or b.data.ndim > 2:
        raise _shape_error("matmul", a.shape, b.shape)
    if a.shape[-1] != b.shape[0]:
        raise _shape_error("matmul", a.shape, b.shape)
    out = Tensor(a.data @ b.data)
    ad, bd = a.data, b.data

    def pull_a(g: np.ndarray) -> np.ndarray:
        if ad.ndim == 1:          # (k,) @ (k,m) -> (m,)
            return bd @ g
        if bd.ndim == 1:          # (n,k) @ (k,) -> (n,)
            return np.outer(g, bd)
        return g @ bd.T

    def pull_b(g: np.ndarray) -> np.ndarray:
        if ad.ndim == 1:
            return np.outer(ad, g)
        if bd.ndim == 1:
            return ad.T @ g
        return ad.T @ g

    return _record(out, [(a, pull_a), (b, pull_b)])


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise _shape_error("transpose", a.shape)
    out = Tensor(a.data.T)
    return _record(out, [(a, lambda g: g.T)])


def sigmoid(a: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-a.data))
    out = Tensor(s)
    return _record(out, [(a, lambda g: g * s * (1.0 - s))])


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    out = Tensor(t)
    return _record(out, [(a, lambda g: g * (1.0 - t * t))])


def relu(a: Tensor) -> Tensor:
    # Subgradient 0 at the kink.
    mask = a.data > 0.0
    out = Tensor(np.where(mask, a.data, 0.0))
    return _record(out, [(a, lambda g: g * mask)])


def exp(a: Tensor) -> Tensor:
    e = np.exp(a.data)
    out = Tensor(e)
    return _record(out, [(a, lambda g: g * e)])


def log(a: Tensor) -> Tensor:
    out = Tensor(np.log(a.data))
    ad = a.data
    return _record(out, [(a, lambda g: g / ad)])


def tsum(a: Tensor) -> Tensor:
    out = Tensor(a.data.sum())
    shape = a.shape
    return _record(out, [(a, lambda g: np.broadcast_to(g, shape).copy() if shape else np.asarray(g))])


def logsumexp(a: Tensor, axis: int) -> Tensor:
    m = np.max(a.data, axis=axis, keepdims=True)
    # Guard fully -inf slices would produce nan; callers never build them,
    # but keep the subtraction finite for partially -inf inputs.
    m_safe = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(a.data - m_safe)
    s = e.sum(axis=axis, keepdims=True)
    out_data = np.squeeze(np.log(s) + m_safe, axis=axis)
    out = Tensor(out_data)
    w = e / s

    def pull(g: np.ndarray) -> np.ndarray:
        return np.expand_dims(g, axis=axis) * w

    return _record(out, [(a, pull)])


def masked_softmax(a: Tensor, mask: np.ndarray, axis: int = -1) -> Tensor:
    """Softmax over an axis restricted to `mask` (boolean, same shape).

    Masked entries come out exactly 0 and are excluded from normalization;
    every slice along the axis must keep at least one unmasked entry.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape:
        raise _shape_error("masked_softmax", a.shape, mask.shape)
    if not mask.any(axis=axis).all():
        raise ValueError("masked_softmax: a row has no unmasked entries")
    neg = np.where(mask, a.data, -np.inf)
    m = np.max(neg, axis=axis, keepdims=True)
    e = np.where(mask, np.exp(a.data - m), 0.0)
    s = e.sum(axis=axis, keepdims=True)
    p = e / s
    out = Tensor(p)

    def pull(g: np.ndarray) -> np.ndarray:
        inner = (g * p).sum(axis=axis, keepdims=True)
        return p * (g - inner)

    return _record(out, [(a, pull)])


def concat_last(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ValueError("concat_last: empty input list")
    lead = parts[0].shape[:-1]
    for p in parts[1:]:
        if p.shape[:-1] != lead:
            raise _shape_error("concat_last", parts[0].shape, p.shape)
    out = Tensor(np.concatenate([p.data for p in parts], axis=-1))
    widths = [p.shape[-1] for p in parts]
    offsets = np.cumsum([0] + widths)
    pulls = []
    for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
        pulls.append((p, (lambda lo=lo, hi=hi: lambda g: g[..., lo:hi])()))
    return _record(out, pulls)


def stack_rows(rows: Sequence[Tensor]) -> Tensor:
    if not rows:
        raise ValueError("stack_rows: empty input list")
    width = rows[0].shape
    for r in rows[1:]:
        if r.shape != width:
            raise _shape_error("stack_rows", width, r.shape)
    out = Tensor(np.stack([r.data for r in rows], axis=0))
    pulls = [(r, (lambda i=i: lambda g: g[i])()) for i, r in enumerate(rows)]
    return _record(out, pulls)


def gather_rows(a: Tensor, indices: Sequence[int]) -> Tensor:
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise ValueError("gather_rows: indices must be one-dimensional")
    out = Tensor(a.data[idx])
    shape = a.data.shape

    def pull(g: np.ndarray) -> np.ndarray:
        full = np.zeros(shape, dtype=np.float64)
        np.add.at(full, idx, g)
        return full

    return _record(out, [(a, pull)])


def rows_mean(a: Tensor, indices: Sequence[int]) -> Tensor:
    idx = np.asarray(indices, dtype=np.intp)
    if idx.size == 0:
        raise ValueError("rows_mean: empty index set")
    out = Tensor(a.data[idx].mean(axis=0))
    shape = a.data.shape
    k = idx.size

    def pull(g: np.ndarray) -> np.ndarray:
        full = np.zeros(shape, dtype=np.float64)
        np.add.at(full, idx, np.broadcast_to(g / k, (k,) + g.shape))
        return full

    return _record(out, [(a, pull)])


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    if int(np.prod(shape)) != a.size:
        raise _shape_error("reshape", a.shape, tuple(shape))
    out = Tensor(a.data.reshape(shape))
    orig = a.shape
    return _record(out, [(a, lambda g: g.reshape(orig))])


def slice_axis0(a: Tensor, start: int, stop: int) -> Tensor:
    n = a.shape[0] if a.data.ndim else 0
    if not (0 <= start < stop <= n):
        raise _shape_error("slice_axis0", a.shape, (start, stop))
    out = Tensor(a.data[start:stop])
    shape = a.data.shape

    def pull(g: np.ndarray) -> np.ndarray:
        full = np.zeros(shape, dtype=np.float64)
        full[start:stop] = g
        return full

    return _record(out, [(a, pull)])


def scatter_matrix(values: Tensor, rows: Sequence[int], cols: Sequence[int],
                   shape: tuple[int, int]) -> Tensor:
    """Place a vector of entries into an otherwise exactly-zero matrix.

    Positions must be unique; duplicates are a caller bug and rejected.
    """
    r = np.asarray(rows, dtype=np.intp)
    c = np.asarray(cols, dtype=np.intp)
    if values.data.ndim != 1 or r.shape != values.shape or c.shape != values.shape:
        raise _shape_error("scatter_matrix", values.shape, (len(rows), len(cols)))
    flat = r * shape[1] + c
    if len(np.unique(flat)) != len(flat):
        raise ValueError("scatter_matrix: duplicate positions")
    full = np.zeros(shape, dtype=np.float64)
    full[r, c] = values.data
    out = Tensor(full)
    return _record(out, [(values, lambda g: g[r, c])])


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis with learned per-feature gain and bias."""
    d = a.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise _shape_error("layer_norm", a.shape, gain.shape)
    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(xhat * gain.data + bias.data)
    gd = gain.data

    def pull_a(g: np.ndarray) -> np.ndarray:
        dxhat = g * gd
        term = dxhat - dxhat.mean(axis=-1, keepdims=True) \
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        return inv * term

    def pull_gain(g: np.ndarray) -> np.ndarray:
        return (g * xhat).reshape(-1, d).sum(axis=0)

    def pull_bias(g: np.ndarray) -> np.ndarray:
        return g.reshape(-1, d).sum(axis=0)

    return _record(out, [(a, pull_a), (gain, pull_gain), (bias, pull_bias)])


def squared_l2(params: Iterable[Tensor]) -> Tensor:
    params = list(params)
    if not params:
        raise ValueError("squared_l2: empty parameter set")
    total = sum(float((p.data * p.data).sum()) for p in params)
    out = Tensor(total)
    pulls = [(p, (lambda p=p: lambda g: 2.0 * g * p.data)()) for p in params]
    return _record(out, pulls)


def dropout(a: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; draw the mask from the caller's generator."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout: rate {rate} outside [0, 1)")
    if rate == 0.0:
        return a
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    out = Tensor(a.data * keep)
    return _record(out, [(a, lambda g: g * keep)])


def row(a: Tensor, i: int) -> Tensor:
    """One row of a matrix as a flat vector."""
    return reshape(gather_rows(a, [i]), a.shape[1:])
