"""Small dense tensor with reverse-mode autodiff.

Values are float64 numpy arrays. Each op records its parents and a closure
that pushes the output gradient back to them; ``Tensor.backward`` walks the
recorded graph once in reverse topological order.

Broadcasting is limited to scalar-vs-tensor and equal shapes. Reductions sum
strictly left to right (via a running cumulative sum) so results do not
depend on numpy's pairwise summation blocking.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "tensor",
    "matmul",
    "add",
    "sub",
    "mul",
    "neg",
    "relu",
    "pow_k",
    "abs_",
    "log",
    "exp",
    "sum_",
    "mean",
    "l2_norm",
    "softmax",
    "softmax_cross_entropy",
    "ShapeError",
    "DomainError",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class DomainError(ValueError):
    """Input lies outside the mathematical domain of the op."""


def _lr_sum(a: np.ndarray, axis: Optional[int] = None) -> np.ndarray:
    # sequential accumulation: cumsum is a strict left-to-right scan
    if axis is None:
        flat = a.reshape(-1)
        if flat.size == 0:
            return np.array(0.0)
        return np.array(np.cumsum(flat)[-1])
    if a.shape[axis] == 0:
        return np.zeros(np.delete(a.shape, axis))
    return np.take(np.cumsum(a, axis=axis), -1, axis=axis)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, _parents: Sequence["Tensor"] = (), op: str = "leaf"):
        arr = np.array(data, dtype=np.float64)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents = tuple(_parents)
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self.op = op

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    # -- graph ---------------------------------------------------------
    def graph(self) -> list["Tensor"]:
        """Nodes reachable from this tensor in topological order (inputs first)."""
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in reversed(node._parents):
                if id(p) not in seen:
                    stack.append((p, False))
        return order

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(self.graph()):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                prev = grads.get(id(parent))
                grads[id(parent)] = pg if prev is None else prev + pg

    # -- operator sugar ------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, k: int):
        return pow_k(self, k)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: Iterable[Tensor], op: str, backward) -> Tensor:
    parents = tuple(parents)
    needs = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs, _parents=parents if needs else (), op=op)
    if needs:
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    # scalar operand: collapse everything
    return _lr_sum(g).reshape(shape)


def _check_binary(a: Tensor, b: Tensor, name: str) -> None:
    if a.shape == b.shape or a.size == 1 and a.data.ndim <= 1 or b.size == 1 and b.data.ndim <= 1:
        return
    raise ShapeError(f"{name}: shapes {a.shape} and {b.shape} are not equal and neither is a scalar")


# -- binary ops --------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    A, B = a.data, b.data

    def backward(g):
        return g @ B.T, A.T @ g

    return _result(A @ B, (a, b), "matmul", backward)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_binary(a, b, "add")
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _result(a.data + b.data, (a, b), "add", backward)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_binary(a, b, "sub")
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g, sa), _unbroadcast(-g, sb)

    return _result(a.data - b.data, (a, b), "sub", backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_binary(a, b, "mul")
    A, B = a.data, b.data

    def backward(g):
        return _unbroadcast(g * B, A.shape), _unbroadcast(g * A, B.shape)

    return _result(A * B, (a, b), "mul", backward)


# -- unary ops ---------------------------------------------------------

def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _result(-a.data, (a,), "neg", lambda g: (-g,))


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0  # subgradient 0 at 0
    return _result(np.where(mask, a.data, 0.0), (a,), "relu", lambda g: (g * mask,))


def pow_k(a, k: int) -> Tensor:
    a = _as_tensor(a)
    if int(k) != k or k < 1:
        raise DomainError(f"pow_k expects a positive integer exponent, got {k}")
    k = int(k)
    X = a.data

    def backward(g):
        return (g * k * X ** (k - 1),)

    return _result(X**k, (a,), f"pow_{k}", backward)


def abs_(a) -> Tensor:
    a = _as_tensor(a)
    sign = np.sign(a.data)  # sign(0) = 0 gives subgradient 0 at the kink
    return _result(np.abs(a.data), (a,), "abs", lambda g: (g * sign,))


def log(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data <= 0):
        raise DomainError("log of non-positive input")
    X = a.data
    return _result(np.log(X), (a,), "log", lambda g: (g / X,))


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out = np.exp(a.data)
    return _result(out, (a,), "exp", lambda g: (g * out,))


# -- reductions --------------------------------------------------------

def _check_axis(t: Tensor, axis: Optional[int]) -> Optional[int]:
    if axis is None:
        return None
    nd = t.data.ndim
    if not -nd <= axis < nd:
        raise ShapeError(f"axis {axis} out of range for shape {t.shape}")
    return axis % nd


def sum_(a, axis: Optional[int] = None) -> Tensor:
    a = _as_tensor(a)
    axis = _check_axis(a, axis)
    shape = a.shape

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _result(_lr_sum(a.data, axis), (a,), "sum", backward)


def mean(a, axis: Optional[int] = None) -> Tensor:
    a = _as_tensor(a)
    axis = _check_axis(a, axis)
    n = a.size if axis is None else a.shape[axis]
    if n == 0:
        raise ShapeError("mean over an empty axis")
    shape = a.shape

    def backward(g):
        g = g / n
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _result(_lr_sum(a.data, axis) / n, (a,), "mean", backward)


def l2_norm(a) -> Tensor:
    """Euclidean norm over all entries; gradient is zero at the origin."""
    a = _as_tensor(a)
    X = a.data
    norm = float(np.sqrt(_lr_sum(X * X)))

    def backward(g):
        if norm == 0.0:
            return (np.zeros_like(X),)
        return (g * X / norm,)

    return _result(np.array(norm), (a,), "l2_norm", backward)


# -- classification ----------------------------------------------------

def _softmax_rows(Z: np.ndarray) -> np.ndarray:
    shifted = Z - Z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / _lr_sum(e, axis=1)[:, None]


def softmax(logits) -> Tensor:
    """Row-wise softmax of a [b, c] tensor."""
    z = _as_tensor(logits)
    if z.data.ndim != 2:
        raise ShapeError(f"softmax expects [batch, classes], got {z.shape}")
    P = _softmax_rows(z.data)

    def backward(g):
        inner = _lr_sum(g * P, axis=1)[:, None]
        return (P * (g - inner),)

    return _result(P, (z,), "softmax", backward)


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Mean over the batch of -log softmax(logits)[label]."""
    z = _as_tensor(logits)
    if z.data.ndim != 2:
        raise ShapeError(f"logits must be [batch, classes], got {z.shape}")
    y = np.asarray(labels)
    b, c = z.shape
    if y.shape != (b,):
        raise ShapeError(f"labels shape {y.shape} does not match batch size {b}")
    if y.size and (y.min() < 0 or y.max() >= c):
        raise IndexError(f"label out of range [0, {c})")
    y = y.astype(np.int64)
    Z = z.data
    shifted = Z - Z.max(axis=1, keepdims=True)
    logsum = np.log(_lr_sum(np.exp(shifted), axis=1))
    rows = np.arange(b)
    nll = logsum - shifted[rows, y]
    loss = _lr_sum(nll) / b

    def backward(g):
        P = np.exp(shifted - logsum[:, None])
        P[rows, y] -= 1.0
        return (g * P / b,)

    return _result(loss, (z,), "softmax_xent", backward)
