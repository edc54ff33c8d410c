"""Dense 2-D tensors with tape-based reverse-mode gradients, Adam, and
finite-difference gradient checking.

Operations record onto the innermost active :class:`Tape` whenever one of
their inputs requires a gradient::

    with Tape() as tape:
        loss = cross_entropy_from_logits(matmul(x, w), labels)
    tape.backward(loss)
    w.grad  # d loss / d w

Everything is float64. Each primitive checks shapes up front and refuses to
produce non-finite output.
"""

from __future__ import annotations

import io
import os
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np


class ShapeError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"shape error tensor {arr.shape} vs (rows, cols)")
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape  # type: ignore[return-value]

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


_local = threading.local()


def _tape_stack() -> list:
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


class Tape:
    """Records backward closures in forward order; one per forward pass."""

    def __init__(self):
        self.records: list[tuple[Tensor, Callable[[np.ndarray], None]]] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _tape_stack().pop()

    def backward(self, loss: Tensor) -> None:
        if loss.shape != (1, 1):
            raise ShapeError(f"shape error backward {loss.shape} vs (1, 1)")
        loss.grad = np.ones((1, 1))
        for out, fn in reversed(self.records):
            if out.grad is not None:
                fn(out.grad)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        t.grad = g.copy() if t.grad is None else t.grad + g


def _result(op: str, data: np.ndarray, inputs: Sequence[Tensor], backward) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NumericError(f"numeric overflow in {op}")
    needs = any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = needs
    stack = _tape_stack()
    if needs and stack:
        stack[-1].records.append((out, backward))
    return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check(op: str, got, want) -> None:
    if got != want:
        raise ShapeError(f"shape error {op} {got} vs {want}")


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check("matmul", a.shape[1], b.shape[0])

    def backward(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _result("matmul", a.data @ b.data, (a, b), backward)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check("add", b.shape, a.shape)

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _result("add", a.data + b.data, (a, b), backward)


def add_bias(x, bias) -> Tensor:
    """Add a (1, F) row vector to every row of an (N, F) tensor."""
    x, bias = _as_tensor(x), _as_tensor(bias)
    _check("add_bias", bias.shape, (1, x.shape[1]))

    def backward(g):
        _accumulate(x, g)
        _accumulate(bias, g.sum(axis=0, keepdims=True))

    return _result("add_bias", x.data + bias.data, (x, bias), backward)


def scale(x, c: float) -> Tensor:
    x = _as_tensor(x)
    c = float(c)

    def backward(g):
        _accumulate(x, c * g)

    return _result("scale", c * x.data, (x,), backward)


def transpose(x) -> Tensor:
    x = _as_tensor(x)

    def backward(g):
        _accumulate(x, g.T)

    return _result("transpose", x.data.T.copy(), (x,), backward)


def relu(x) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0

    def backward(g):
        _accumulate(x, g * mask)

    return _result("relu", np.where(mask, x.data, 0.0), (x,), backward)


def row_softmax(x, scale: float = 1.0) -> Tensor:
    """Softmax along each row, multiplied by ``scale``.

    The scale is folded in as ``e * (scale / sum(e))`` so a constant row with
    ``scale = N`` gives exactly 1.0 in every entry.
    """
    x = _as_tensor(x)
    scale = float(scale)
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e * (scale / e.sum(axis=1, keepdims=True))

    def backward(g):
        _accumulate(x, y * (g - (g * y).sum(axis=1, keepdims=True) / scale))

    return _result("row_softmax", y, (x,), backward)


def global_max_rows(x) -> Tensor:
    """Column-wise max over rows; gradient goes to the first maximal row."""
    x = _as_tensor(x)
    if x.shape[0] == 0:
        raise ShapeError("shape error global_max_rows (0, F) vs (N>=1, F)")
    idx = np.argmax(x.data, axis=0)
    cols = np.arange(x.shape[1])

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[idx, cols] = g[0]
        _accumulate(x, gx)

    return _result("global_max_rows", x.data[idx, cols][None, :], (x,), backward)


def global_mean_rows(x) -> Tensor:
    x = _as_tensor(x)
    n = x.shape[0]
    if n == 0:
        raise ShapeError("shape error global_mean_rows (0, F) vs (N>=1, F)")

    def backward(g):
        _accumulate(x, np.repeat(g / n, n, axis=0))

    return _result("global_mean_rows", x.data.mean(axis=0, keepdims=True), (x,), backward)


def scale_rows(x, k) -> Tensor:
    """Multiply row i of an (N, F) tensor by k[i]; ``k`` has shape (N, 1)."""
    x, k = _as_tensor(x), _as_tensor(k)
    _check("scale_rows", k.shape, (x.shape[0], 1))

    def backward(g):
        _accumulate(x, g * k.data)
        _accumulate(k, (g * x.data).sum(axis=1, keepdims=True))

    return _result("scale_rows", x.data * k.data, (x, k), backward)


def cross_entropy_from_logits(logits, labels) -> Tensor:
    """Mean cross-entropy of (M, C) logits against M integer labels."""
    logits = _as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    _check("cross_entropy_from_logits", labels.shape[0], logits.shape[0])
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise ShapeError(
            f"shape error cross_entropy_from_logits label range vs {logits.shape[1]} classes"
        )
    m = logits.shape[0]
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsum
    rows = np.arange(m)
    loss = -logp[rows, labels].mean()

    def backward(g):
        p = np.exp(logp)
        p[rows, labels] -= 1.0
        _accumulate(logits, g[0, 0] * p / m)

    return _result("cross_entropy_from_logits", np.array([[loss]]), (logits,), backward)


def sum_scalars(terms: Sequence[Tensor]) -> Tensor:
    out = terms[0]
    for t in terms[1:]:
        out = add(out, t)
    return out


# optimisation


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(
    params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], state: AdamState
) -> tuple[Mapping[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"shape error adam_step {g.shape} vs {p.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name] = state.beta1 * state.m[name] + (1 - state.beta1) * g
        v = state.v[name] = state.beta2 * state.v[name] + (1 - state.beta2) * g * g
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


def glorot_init(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    if rows < 1 or cols < 1:
        raise ValueError("glorot_init needs positive dimensions")
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


# gradient checking

LossFn = Callable[[Mapping[str, Tensor]], Tensor]


def analytic_grads(loss_fn: LossFn, params: Mapping[str, np.ndarray]) -> tuple[float, dict]:
    tensors = {k: Tensor(v, requires_grad=True) for k, v in params.items()}
    with Tape() as tape:
        loss = loss_fn(tensors)
    tape.backward(loss)
    grads = {
        k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in tensors.items()
    }
    return loss.item(), grads


def gradcheck(loss_fn: LossFn, params: Mapping[str, np.ndarray], h: float = 1e-5) -> float:
    """Max over coordinates of |a - n| / max(1, |a|, |n|), central differences."""
    _, grads = analytic_grads(loss_fn, params)
    work = {k: np.array(v, dtype=np.float64) for k, v in params.items()}

    def value() -> float:
        return loss_fn({k: Tensor(v) for k, v in work.items()}).item()

    worst = 0.0
    for name, arr in work.items():
        flat = arr.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = value()
            flat[i] = orig - h
            down = value()
            flat[i] = orig
            num = (up - down) / (2 * h)
            ana = grads[name].reshape(-1)[i]
            worst = max(worst, abs(ana - num) / max(1.0, abs(ana), abs(num)))
    return worst


# parameter files
#
# layout: b"SSPARAM1" | u32 count | count x (u16 name_len | name utf-8 | u32 rows | u32 cols)
#         | all arrays in table order as little-endian f64, row-major

MAGIC = b"SSPARAM1"


def save_params(params: Mapping[str, np.ndarray], path: Union[str, os.PathLike]) -> None:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", len(params)))
    for name, arr in params.items():
        raw = name.encode("utf-8")
        rows, cols = np.asarray(arr).reshape(np.asarray(arr).shape[0], -1).shape
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<II", rows, cols))
    for arr in params.values():
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_params(path: Union[str, os.PathLike]) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"not a parameter file: {path}")
    (count,) = struct.unpack_from("<I", data, 8)
    pos = 12
    table = []
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos: pos + nlen].decode("utf-8")
        pos += nlen
        rows, cols = struct.unpack_from("<II", data, pos)
        pos += 8
        table.append((name, rows, cols))
    out = {}
    for name, rows, cols in table:
        nbytes = 8 * rows * cols
        out[name] = np.frombuffer(data[pos: pos + nbytes], dtype="<f8").reshape(rows, cols).astype(np.float64)
        pos += nbytes
    if pos != len(data):
        raise ValueError(f"trailing bytes in parameter file: {path}")
    return out
