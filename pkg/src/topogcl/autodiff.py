"""Dense float64 tensors with reverse-mode differentiation and Adam.

Each primitive is a :class:`Function` subclass with a ``forward`` on numpy
arrays and a ``backward`` that maps the output gradient to input gradients.
Calling a primitive on tensors that require gradients records the call on the
output tensor; :meth:`Tensor.backward` replays those records in reverse
topological order.
"""

from __future__ import annotations

import contextlib
import json
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit

__all__ = [
    "Tensor",
    "Function",
    "DimensionError",
    "no_grad",
    "tensor",
    "matmul",
    "sparse_matmul",
    "add",
    "sub",
    "mul",
    "scalar_mul",
    "div",
    "relu",
    "sigmoid",
    "exp",
    "log",
    "sqrt",
    "square",
    "transpose",
    "row_sum",
    "sum_all",
    "mean_all",
    "concat_rows",
    "concat_cols",
    "take",
    "reshape",
    "AdamState",
    "adam_step",
    "Adam",
    "save_checkpoint",
    "load_checkpoint",
]

_GRAD_ENABLED = True


class DimensionError(ValueError):
    pass


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_ctx")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        # trainable tensors own their buffer because Adam updates it in place
        self.data = np.array(data, dtype=np.float64) if requires_grad else np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._ctx = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single element, shape is {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f", name={self.name!r}" if self.name else ""
        op = f", op={type(self._ctx).__name__}" if self._ctx is not None else ""
        return f"Tensor(shape={self.shape}{tag}{op})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scalar_mul(self, -1.0)

    @property
    def T(self):
        return transpose(self)

    def parents(self) -> tuple:
        return () if self._ctx is None else self._ctx.inputs

    def backward(self):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every tensor on the tape."""
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar loss, got shape {self.shape}")
        if self._ctx is None and not self.requires_grad:
            raise ValueError("loss is not connected to any tensor that requires grad")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents():
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._ctx is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            ctx = node._ctx
            in_grads = ctx.backward(g)
            for inp, ig in zip(ctx.inputs, in_grads):
                if ig is None or not inp.requires_grad:
                    continue
                if ig.shape != inp.shape:
                    ig = _unbroadcast(ig, inp.shape)
                prev = grads.get(id(inp))
                grads[id(inp)] = ig if prev is None else prev + ig


def tensor(data, requires_grad=False, name=None) -> Tensor:
    return Tensor(data, requires_grad, name)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Function:
    """A differentiable primitive. Subclasses override ``forward``/``backward``."""

    def __init__(self, *inputs):
        self.inputs = inputs
        self.saved = ()

    def forward(self, *arrays):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs, **kwargs):
        tensors = tuple(_as_tensor(x) for x in inputs)
        fn = cls(*tensors)
        fn.kwargs = kwargs
        out = Tensor(fn.forward(*(t.data for t in tensors)))
        if _GRAD_ENABLED and any(t.requires_grad for t in tensors):
            out.requires_grad = True
            out._ctx = fn
        return out


def _broadcast(fn, a, b, op):
    try:
        return fn(a, b)
    except ValueError:
        raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


class MatMul(Function):
    def forward(self, a, b):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
        self.saved = (a, b)
        return a @ b

    def backward(self, grad):
        a, b = self.saved
        return grad @ b.T, a.T @ grad


class Add(Function):
    def forward(self, a, b):
        return _broadcast(np.add, a, b, "add")

    def backward(self, grad):
        return grad, grad


class Sub(Function):
    def forward(self, a, b):
        return _broadcast(np.subtract, a, b, "sub")

    def backward(self, grad):
        return grad, -grad


class Mul(Function):
    def forward(self, a, b):
        self.saved = (a, b)
        return _broadcast(np.multiply, a, b, "mul")

    def backward(self, grad):
        a, b = self.saved
        return grad * b, grad * a


class Div(Function):
    def forward(self, a, b):
        self.saved = (a, b)
        return _broadcast(np.divide, a, b, "div")

    def backward(self, grad):
        a, b = self.saved
        return grad / b, -grad * a / (b * b)


class ScalarMul(Function):
    def forward(self, a):
        self.saved = (float(self.kwargs["c"]),)
        return a * self.saved[0]

    def backward(self, grad):
        return (grad * self.saved[0],)


class Relu(Function):
    def forward(self, a):
        self.saved = (a > 0,)
        return np.where(a > 0, a, 0.0)

    def backward(self, grad):
        return (grad * self.saved[0],)


class Sigmoid(Function):
    def forward(self, a):
        out = expit(a)
        self.saved = (out,)
        return out

    def backward(self, grad):
        (s,) = self.saved
        return (grad * s * (1.0 - s),)


class Exp(Function):
    def forward(self, a):
        out = np.exp(a)
        self.saved = (out,)
        return out

    def backward(self, grad):
        return (grad * self.saved[0],)


class Log(Function):
    def forward(self, a):
        if np.any(a <= 0):
            raise FloatingPointError("log of a non-positive value")
        self.saved = (a,)
        return np.log(a)

    def backward(self, grad):
        return (grad / self.saved[0],)


class Sqrt(Function):
    def forward(self, a):
        out = np.sqrt(a)
        self.saved = (out,)
        return out

    def backward(self, grad):
        return (grad * 0.5 / self.saved[0],)


class Square(Function):
    def forward(self, a):
        self.saved = (a,)
        return a * a

    def backward(self, grad):
        return (2.0 * grad * self.saved[0],)


class Transpose(Function):
    def forward(self, a):
        if a.ndim != 2:
            raise DimensionError(f"transpose needs a 2-d tensor, got shape {a.shape}")
        return a.T.copy()

    def backward(self, grad):
        return (grad.T,)


class RowSum(Function):
    def forward(self, a):
        if a.ndim != 2:
            raise DimensionError(f"row_sum needs a 2-d tensor, got shape {a.shape}")
        return a.sum(axis=1, keepdims=True)

    def backward(self, grad):
        (a,) = self.inputs
        return (np.broadcast_to(grad, a.shape).copy(),)


class SumAll(Function):
    def forward(self, a):
        return np.array(a.sum())

    def backward(self, grad):
        (a,) = self.inputs
        return (np.full(a.shape, float(grad)),)


class MeanAll(Function):
    def forward(self, a):
        if a.size == 0:
            raise DimensionError("mean_all of an empty tensor")
        return np.array(a.mean())

    def backward(self, grad):
        (a,) = self.inputs
        return (np.full(a.shape, float(grad) / a.size),)


class Concat(Function):
    def forward(self, *arrays):
        axis = self.kwargs["axis"]
        other = 1 - axis
        if any(x.ndim != 2 for x in arrays) or len({x.shape[other] for x in arrays}) != 1:
            shapes = " and ".join(str(x.shape) for x in arrays)
            raise DimensionError(f"concat along axis {axis}: incompatible shapes {shapes}")
        self.saved = (np.cumsum([x.shape[axis] for x in arrays])[:-1],)
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        return tuple(np.split(grad, self.saved[0], axis=self.kwargs["axis"]))


class Take(Function):
    """Gather ``a[rows, cols]`` into an ``(m, 1)`` column."""

    def forward(self, a):
        rows, cols = self.kwargs["rows"], self.kwargs["cols"]
        return a[rows, cols].reshape(-1, 1)

    def backward(self, grad):
        (a,) = self.inputs
        out = np.zeros(a.shape)
        np.add.at(out, (self.kwargs["rows"], self.kwargs["cols"]), grad.reshape(-1))
        return (out,)


class SparseMatMul(Function):
    """``S @ b`` for a constant scipy sparse ``S``; no gradient flows into ``S``."""

    def forward(self, b):
        s = self.kwargs["s"]
        if b.ndim != 2 or s.shape[1] != b.shape[0]:
            raise DimensionError(f"sparse_matmul: incompatible shapes {s.shape} and {b.shape}")
        return np.asarray(s @ b)

    def backward(self, grad):
        return (np.asarray(self.kwargs["s"].T @ grad),)


def sparse_matmul(s, b) -> Tensor:
    return SparseMatMul.apply(b, s=s)


def matmul(a, b) -> Tensor:
    return MatMul.apply(a, b)


def add(a, b) -> Tensor:
    return Add.apply(a, b)


def sub(a, b) -> Tensor:
    return Sub.apply(a, b)


def mul(a, b) -> Tensor:
    """Elementwise product with numpy broadcasting."""
    return Mul.apply(a, b)


elementwise_mul = mul
elementwise_sub = sub


def div(a, b) -> Tensor:
    return Div.apply(a, b)


def scalar_mul(a, c: float) -> Tensor:
    return ScalarMul.apply(a, c=c)


def relu(a) -> Tensor:
    return Relu.apply(a)


def sigmoid(a) -> Tensor:
    return Sigmoid.apply(a)


def exp(a) -> Tensor:
    return Exp.apply(a)


def log(a) -> Tensor:
    return Log.apply(a)


def sqrt(a) -> Tensor:
    return Sqrt.apply(a)


def square(a) -> Tensor:
    return Square.apply(a)


def transpose(a) -> Tensor:
    return Transpose.apply(a)


def row_sum(a) -> Tensor:
    return RowSum.apply(a)


def sum_all(a) -> Tensor:
    return SumAll.apply(a)


def mean_all(a) -> Tensor:
    return MeanAll.apply(a)


def concat_rows(tensors: Sequence) -> Tensor:
    return Concat.apply(*tensors, axis=0)


def concat_cols(tensors: Sequence) -> Tensor:
    return Concat.apply(*tensors, axis=1)


class Reshape(Function):
    def forward(self, a):
        shape = tuple(self.kwargs["shape"])
        if int(np.prod(shape)) != a.size:
            raise DimensionError(f"reshape: cannot view shape {a.shape} as {shape}")
        return a.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.inputs[0].shape),)


def reshape(a, shape) -> Tensor:
    return Reshape.apply(a, shape=shape)


def take(a, rows, cols) -> Tensor:
    return Take.apply(a, rows=np.asarray(rows, dtype=np.int64), cols=np.asarray(cols, dtype=np.int64))


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState) -> None:
    """In-place bias-corrected Adam update of the arrays in ``params``."""
    if len(params) != len(grads):
        raise DimensionError(f"{len(params)} parameters but {len(grads)} gradients")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(state.m) != len(params):
        raise DimensionError(f"state tracks {len(state.m)} parameters, got {len(params)}")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise DimensionError(f"adam_step: parameter shape {p.shape} vs gradient shape {g.shape}")
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


class Adam:
    def __init__(self, params: Iterable[Tensor], lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        grads = [np.zeros_like(p.data) if p.grad is None else p.grad for p in self.params]
        adam_step([p.data for p in self.params], grads, self.state)


# Checkpoint layout (JSON text):
#   {"format": "topogcl-checkpoint", "version": 1, "header": {...},
#    "params": [{"name": str, "shape": [int, ...], "data": [float, ...]}, ...]}
# data is the row-major flattening; floats are written with repr precision so
# a round trip is exact.
CHECKPOINT_FORMAT = "topogcl-checkpoint"


def save_checkpoint(path: str | os.PathLike, params: dict, header: dict | None = None) -> None:
    records = []
    for name, value in params.items():
        arr = value.data if isinstance(value, Tensor) else np.asarray(value, dtype=np.float64)
        records.append({"name": name, "shape": list(arr.shape), "data": arr.reshape(-1).tolist()})
    doc = {"format": CHECKPOINT_FORMAT, "version": 1, "header": header or {}, "params": records}
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path: str | os.PathLike, expected_shapes: dict | None = None):
    """Return ``(header, {name: array})``; shapes are checked against ``expected_shapes``."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    arrays = {}
    for rec in doc["params"]:
        shape = tuple(rec["shape"])
        data = np.asarray(rec["data"], dtype=np.float64)
        if data.size != int(np.prod(shape, dtype=np.int64)):
            raise DimensionError(f"{rec['name']}: {data.size} values for shape {shape}")
        arrays[rec["name"]] = data.reshape(shape)
    if expected_shapes is not None:
        check_shapes(arrays, expected_shapes)
    return doc.get("header", {}), arrays


def check_shapes(arrays: dict, expected_shapes: dict) -> None:
    missing = set(expected_shapes) - set(arrays)
    if missing:
        raise DimensionError(f"checkpoint lacks parameters {sorted(missing)}")
    for name, shape in expected_shapes.items():
        if arrays[name].shape != tuple(shape):
            raise DimensionError(
                f"{name}: checkpoint shape {arrays[name].shape} does not match expected {tuple(shape)}"
            )
