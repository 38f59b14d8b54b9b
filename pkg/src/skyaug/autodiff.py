"""Minimal reverse-mode autodiff over numpy arrays.

A Tensor wraps a float64 ndarray, remembers the op and parents that produced
it, and accumulates its gradient during backward(). Only the ops the GAN
needs are provided: arithmetic with broadcasting, matmul, reshape, the four
activations, log, clip, reductions, and strided conv / transposed conv.

Every op verifies its result is finite and backward() verifies every
gradient is finite, raising FloatingPointError naming the offending op.
"""

from __future__ import annotations

import numpy as np


def _check_finite(arr: np.ndarray, op: str, what: str = "values") -> None:
    # NaN/Inf survive summation, so the single-scan sum is a sound fast path;
    # the elementwise pass re-verifies to rule out pure overflow of the sum.
    if not np.isfinite(arr.sum()) and not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite {what} produced by op '{op}'")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient back down to `shape` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """Array node in the autodiff graph."""

    __slots__ = ("data", "grad", "op", "_parents", "_backward")

    def __init__(self, data, parents=(), op="leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        _check_finite(self.data, op)
        self.grad = np.zeros_like(self.data)
        self.op = op
        self._parents = parents
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad[...] = 0.0

    def detach(self) -> "Tensor":
        """A leaf tensor sharing this tensor's data; gradients stop here."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.grad = np.zeros_like(self.data)
        out.op = "leaf"
        out._parents = ()
        out._backward = None
        return out

    def backward(self):
        """Populate .grad on every ancestor, seeding d(self)/d(self) = 1."""
        topo: list[Tensor] = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            _check_finite(node.grad, node.op, "gradient")
            if node._backward is not None:
                node._backward()

    # --- arithmetic ---

    @staticmethod
    def _wrap(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))

    def __add__(self, other):
        other = Tensor._wrap(other)
        out = Tensor(self.data + other.data, (self, other), "add")

        def _backward():
            self.grad += _unbroadcast(out.grad, self.shape)
            other.grad += _unbroadcast(out.grad, other.shape)
        out._backward = _backward
        return out

    def __mul__(self, other):
        other = Tensor._wrap(other)
        out = Tensor(self.data * other.data, (self, other), "mul")

        def _backward():
            self.grad += _unbroadcast(other.data * out.grad, self.shape)
            other.grad += _unbroadcast(self.data * out.grad, other.shape)
        out._backward = _backward
        return out

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-Tensor._wrap(other))

    def __rsub__(self, other):
        return Tensor._wrap(other) + (-self)

    __radd__ = __add__
    __rmul__ = __mul__

    def matmul(self, other: "Tensor") -> "Tensor":
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ValueError(f"matmul expects 2-D operands, got "
                             f"{self.shape} @ {other.shape}")
        if self.shape[1] != other.shape[0]:
            raise ValueError(f"shape mismatch in matmul: {self.shape} @ {other.shape}")
        out = Tensor(self.data @ other.data, (self, other), "matmul")

        def _backward():
            self.grad += out.grad @ other.data.T
            other.grad += self.data.T @ out.grad
        out._backward = _backward
        return out

    def reshape(self, *shape) -> "Tensor":
        out = Tensor(self.data.reshape(*shape), (self,), "reshape")

        def _backward():
            self.grad += out.grad.reshape(self.shape)
        out._backward = _backward
        return out

    # --- activations and pointwise functions ---

    def relu(self) -> "Tensor":
        out = Tensor(np.maximum(self.data, 0.0), (self,), "relu")

        def _backward():
            self.grad += (self.data > 0.0) * out.grad
        out._backward = _backward
        return out

    def leaky_relu(self, slope: float = 0.2) -> "Tensor":
        if not 0.0 <= slope <= 1.0:
            raise ValueError(f"leaky_relu slope must be in [0, 1], got {slope}")
        out = Tensor(np.maximum(self.data, slope * self.data), (self,), "leaky_relu")

        def _backward():
            self.grad += np.where(self.data > 0.0, 1.0, slope) * out.grad
        out._backward = _backward
        return out

    def tanh(self) -> "Tensor":
        y = np.tanh(self.data)
        out = Tensor(y, (self,), "tanh")

        def _backward():
            self.grad += (1.0 - y * y) * out.grad
        out._backward = _backward
        return out

    def sigmoid(self) -> "Tensor":
        y = 1.0 / (1.0 + np.exp(-self.data))
        out = Tensor(y, (self,), "sigmoid")

        def _backward():
            self.grad += y * (1.0 - y) * out.grad
        out._backward = _backward
        return out

    def log(self) -> "Tensor":
        out = Tensor(np.log(self.data), (self,), "log")

        def _backward():
            self.grad += out.grad / self.data
        out._backward = _backward
        return out

    def clip(self, lo: float, hi: float) -> "Tensor":
        out = Tensor(np.clip(self.data, lo, hi), (self,), "clip")

        def _backward():
            inside = (self.data >= lo) & (self.data <= hi)
            self.grad += inside * out.grad
        out._backward = _backward
        return out

    # --- reductions ---

    def sum(self) -> "Tensor":
        out = Tensor(self.data.sum(), (self,), "sum")

        def _backward():
            self.grad += out.grad
        out._backward = _backward
        return out

    def mean(self) -> "Tensor":
        n = self.data.size
        out = Tensor(self.data.mean(), (self,), "mean")

        def _backward():
            self.grad += out.grad / n
        out._backward = _backward
        return out


# --- strided convolution ---

def _conv_out_side(n: int, k: int, stride: int, pad: int, op: str) -> int:
    if (n + 2 * pad - k) % stride != 0:
        raise ValueError(f"{op}: size {n} incompatible with kernel {k}, "
                         f"stride {stride}, pad {pad}")
    return (n + 2 * pad - k) // stride + 1


def _im2col(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    """Unfold (N, C, H, W) into (N, C*k*k, Ho*Wo) patch columns."""
    n, c, h, w = x.shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    if pad:
        xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
        xp[:, :, pad:pad + h, pad:pad + w] = x
    else:
        xp = x
    cols = np.empty((n, c, k, k, ho, wo), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = xp[:, :, i:i + stride * ho:stride,
                                  j:j + stride * wo:stride]
    return cols.reshape(n, c * k * k, ho * wo)


def _col2im(cols: np.ndarray, shape: tuple, k: int, stride: int, pad: int) -> np.ndarray:
    """Scatter-add patch columns back into an (N, C, H, W) array (im2col adjoint)."""
    n, c, h, w = shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    cols = cols.reshape(n, c, k, k, ho, wo)
    for i in range(k):
        for j in range(k):
            xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols[:, :, i, j]
    return xp[:, :, pad:pad + h, pad:pad + w]


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int, pad: int,
           label: str = "") -> Tensor:
    """Strided 2-D convolution: x (N,C,H,W), w (O,C,K,K), b (O,)."""
    op = f"conv2d[{label}]" if label else "conv2d"
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ValueError(f"{op}: expected 4-D input and weight, got "
                         f"{x.shape} and {w.shape}")
    n, c, h, wd = x.shape
    o, cw, k, k2 = w.shape
    if cw != c or k != k2:
        raise ValueError(f"{op}: weight {w.shape} incompatible with input {x.shape}")
    ho = _conv_out_side(h, k, stride, pad, op)
    wo = _conv_out_side(wd, k, stride, pad, op)

    ckk, l = c * k * k, ho * wo
    # flatten the batch axis into the columns so each product is one GEMM
    colsf = _im2col(x.data, k, stride, pad).transpose(1, 0, 2).reshape(ckk, n * l)
    wmat = w.data.reshape(o, ckk)
    y = (wmat @ colsf).reshape(o, n, ho, wo).transpose(1, 0, 2, 3) \
        + b.data.reshape(1, o, 1, 1)
    out = Tensor(y, (x, w, b), op)

    def _backward():
        gf = out.grad.transpose(1, 0, 2, 3).reshape(o, n * l)
        b.grad += gf.sum(axis=1)
        w.grad += (gf @ colsf.T).reshape(w.shape)
        dcols = (wmat.T @ gf).reshape(ckk, n, l).transpose(1, 0, 2)
        x.grad += _col2im(dcols, x.data.shape, k, stride, pad)
    out._backward = _backward
    return out


def conv_transpose2d(x: Tensor, w: Tensor, b: Tensor, stride: int, pad: int,
                     label: str = "") -> Tensor:
    """Strided 2-D transposed convolution: x (N,C,H,W), w (C,O,K,K), b (O,).

    Output side is (H-1)*stride - 2*pad + K; with K=4, stride=2, pad=1 this
    exactly doubles the input side.
    """
    op = f"conv_transpose2d[{label}]" if label else "conv_transpose2d"
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ValueError(f"{op}: expected 4-D input and weight, got "
                         f"{x.shape} and {w.shape}")
    n, c, h, wd = x.shape
    cw, o, k, k2 = w.shape
    if cw != c or k != k2:
        raise ValueError(f"{op}: weight {w.shape} incompatible with input {x.shape}")
    ho = (h - 1) * stride - 2 * pad + k
    wo = (wd - 1) * stride - 2 * pad + k
    if ho <= 0 or wo <= 0:
        raise ValueError(f"{op}: output side {ho}x{wo} not positive")

    okk, hw = o * k * k, h * wd
    wmat = w.data.reshape(c, okk)
    # flatten the batch axis into the columns so each product is one GEMM
    xmf = x.data.transpose(1, 0, 2, 3).reshape(c, n * hw)
    cols = (wmat.T @ xmf).reshape(okk, n, hw).transpose(1, 0, 2)
    y = _col2im(cols, (n, o, ho, wo), k, stride, pad) + b.data.reshape(1, o, 1, 1)
    out = Tensor(y, (x, w, b), op)

    def _backward():
        b.grad += out.grad.sum(axis=(0, 2, 3))
        dcolsf = _im2col(out.grad, k, stride, pad).transpose(1, 0, 2).reshape(okk, n * hw)
        x.grad += (wmat @ dcolsf).reshape(c, n, h, wd).transpose(1, 0, 2, 3)
        w.grad += (xmf @ dcolsf.T).reshape(w.shape)
    out._backward = _backward
    return out
