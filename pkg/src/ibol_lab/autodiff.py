"""Reverse-mode automatic differentiation on float64 numpy arrays.

A small tape: every operation returns a new ``Tensor`` holding its value and
a closure that routes the incoming adjoint to its parents.  ``backward()``
topologically sorts the tape and accumulates gradients into leaf tensors.
Broadcasting is supported for elementwise binary ops (gradients are summed
back over broadcast axes); nothing here targets GPUs or exotic dtypes.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import special as sps


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """A node of the tape: value, accumulated gradient, backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False,
                 parents: tuple["Tensor", ...] = (),
                 backward: Callable[[np.ndarray], None] | None = None):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents if self.requires_grad else ()
        self._backward = backward

    # -- graph ------------------------------------------------------------

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    # -- elementwise binary ops -------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = as_tensor(other)
        out = Tensor(self.data + other.data, parents=(self, other))
        if out.requires_grad:
            def back(g, a=self, b=other):
                if a.requires_grad:
                    a.accumulate(_unbroadcast(g, a.data.shape))
                if b.requires_grad:
                    b.accumulate(_unbroadcast(g, b.data.shape))
            out._backward = back
        return out

    def __mul__(self, other) -> "Tensor":
        other = as_tensor(other)
        out = Tensor(self.data * other.data, parents=(self, other))
        if out.requires_grad:
            def back(g, a=self, b=other):
                if a.requires_grad:
                    a.accumulate(_unbroadcast(g * b.data, a.data.shape))
                if b.requires_grad:
                    b.accumulate(_unbroadcast(g * a.data, b.data.shape))
            out._backward = back
        return out

    def __sub__(self, other) -> "Tensor":
        return self + (as_tensor(other) * -1.0)

    def __rsub__(self, other) -> "Tensor":
        return as_tensor(other) + (self * -1.0)

    def __truediv__(self, other) -> "Tensor":
        other = as_tensor(other)
        return self * other.reciprocal()

    def __rtruediv__(self, other) -> "Tensor":
        return as_tensor(other) * self.reciprocal()

    __radd__ = __add__
    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        return self * -1.0

    def reciprocal(self) -> "Tensor":
        out = Tensor(1.0 / self.data, parents=(self,))
        if out.requires_grad:
            def back(g, a=self, val=out.data):
                a.accumulate(_unbroadcast(-g * val * val, a.data.shape))
            out._backward = back
        return out

    def pow(self, exponent: float) -> "Tensor":
        out = Tensor(self.data ** exponent, parents=(self,))
        if out.requires_grad:
            def back(g, a=self, e=exponent):
                a.accumulate(g * e * a.data ** (e - 1.0))
            out._backward = back
        return out

    def square(self) -> "Tensor":
        return self * self

    # -- elementwise unary ops ---------------------------------------------

    def exp(self) -> "Tensor":
        out = Tensor(np.exp(self.data), parents=(self,))
        if out.requires_grad:
            def back(g, a=self, val=out.data):
                a.accumulate(g * val)
            out._backward = back
        return out

    def log(self) -> "Tensor":
        out = Tensor(np.log(self.data), parents=(self,))
        if out.requires_grad:
            def back(g, a=self):
                a.accumulate(g / a.data)
            out._backward = back
        return out

    def tanh(self) -> "Tensor":
        out = Tensor(np.tanh(self.data), parents=(self,))
        if out.requires_grad:
            def back(g, a=self, val=out.data):
                a.accumulate(g * (1.0 - val * val))
            out._backward = back
        return out

    def relu(self) -> "Tensor":
        out = Tensor(np.maximum(self.data, 0.0), parents=(self,))
        if out.requires_grad:
            def back(g, a=self):
                a.accumulate(g * (a.data > 0.0))
            out._backward = back
        return out

    def sigmoid(self) -> "Tensor":
        out = Tensor(sps.expit(self.data), parents=(self,))
        if out.requires_grad:
            def back(g, a=self, val=out.data):
                a.accumulate(g * val * (1.0 - val))
            out._backward = back
        return out

    def softplus(self) -> "Tensor":
        # log(1 + e^x), computed stably; derivative is the sigmoid.
        out = Tensor(np.logaddexp(0.0, self.data), parents=(self,))
        if out.requires_grad:
            def back(g, a=self):
                a.accumulate(g * sps.expit(a.data))
            out._backward = back
        return out

    def atanh(self) -> "Tensor":
        out = Tensor(np.arctanh(self.data), parents=(self,))
        if out.requires_grad:
            def back(g, a=self):
                a.accumulate(g / (1.0 - a.data * a.data))
            out._backward = back
        return out

    def gammaln(self) -> "Tensor":
        out = Tensor(sps.gammaln(self.data), parents=(self,))
        if out.requires_grad:
            def back(g, a=self):
                a.accumulate(g * sps.digamma(a.data))
            out._backward = back
        return out

    def clip(self, lo: float, hi: float) -> "Tensor":
        # True clip derivative: zero outside [lo, hi].
        out = Tensor(np.clip(self.data, lo, hi), parents=(self,))
        if out.requires_grad:
            def back(g, a=self):
                mask = (a.data >= lo) & (a.data <= hi)
                a.accumulate(g * mask)
            out._backward = back
        return out

    # -- shape ops -----------------------------------------------------------

    def reshape(self, *shape: int) -> "Tensor":
        out = Tensor(self.data.reshape(*shape), parents=(self,))
        if out.requires_grad:
            def back(g, a=self):
                a.accumulate(g.reshape(a.data.shape))
            out._backward = back
        return out

    def narrow(self, axis: int, start: int, length: int) -> "Tensor":
        """Contiguous slice [start, start+length) along ``axis``."""
        index = [slice(None)] * self.data.ndim
        index[axis] = slice(start, start + length)
        index = tuple(index)
        out = Tensor(self.data[index], parents=(self,))
        if out.requires_grad:
            def back(g, a=self, idx=index):
                full = np.zeros_like(a.data)
                full[idx] = g
                a.accumulate(full)
            out._backward = back
        return out

    # -- reductions ----------------------------------------------------------

    def sum(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), parents=(self,))
        if out.requires_grad:
            def back(g, a=self, ax=axis, kd=keepdims):
                if ax is not None and not kd:
                    g = np.expand_dims(g, ax)
                a.accumulate(np.broadcast_to(g, a.data.shape).copy())
            out._backward = back
        return out

    def mean(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def log_mean_exp(self, axis: int) -> "Tensor":
        """Stable log((1/L) * sum_i(exp(v_i))) along ``axis``.

        The running max is subtracted before exponentiating; its gradient
        contribution cancels exactly, so it is treated as a constant.
        """
        m = np.max(self.data, axis=axis, keepdims=True)
        shifted = self - Tensor(m)
        n = self.data.shape[axis]
        return Tensor(np.squeeze(m, axis=axis)) + \
            (shifted.exp().sum(axis=axis) * (1.0 / n)).log()

    # -- linear algebra --------------------------------------------------------

    def matmul(self, other: "Tensor") -> "Tensor":
        other = as_tensor(other)
        out = Tensor(self.data @ other.data, parents=(self, other))
        if out.requires_grad:
            def back(g, a=self, b=other):
                if a.requires_grad:
                    a.accumulate(g @ b.data.T)
                if b.requires_grad:
                    b.accumulate(a.data.T @ g)
            out._backward = back
        return out

    __matmul__ = matmul

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis),
                 parents=tuple(tensors))
    if out.requires_grad:
        sizes = [t.data.shape[axis] for t in tensors]
        def back(g, parts=tensors, sz=sizes, ax=axis):
            offsets = np.cumsum([0] + sz)
            for t, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
                if t.requires_grad:
                    idx = [slice(None)] * g.ndim
                    idx[ax] = slice(lo, hi)
                    t.accumulate(g[tuple(idx)])
        out._backward = back
    return out


def log_mean_exp(values) -> float:
    """Numerically stable log of the arithmetic mean of exp(values)."""
    v = _as_array(values)
    if v.size == 0:
        raise ValueError("log_mean_exp of empty input")
    m = float(np.max(v))
    return m + float(np.log(np.mean(np.exp(v - m))))


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


class ParamVector:
    """Named, ordered float64 parameter arrays with matching grad buffers.

    Each entry is a leaf ``Tensor``; networks reference the same leaves on
    every forward pass, so ``backward()`` accumulates into these buffers.
    A ParamVector is exclusively owned by a single trainer; concurrent
    read-only evaluation is safe.
    """

    def __init__(self):
        self._entries: dict[str, Tensor] = {}

    def add(self, name: str, values: np.ndarray) -> Tensor:
        if name in self._entries:
            raise ValueError(f"duplicate parameter name: {name}")
        t = Tensor(np.array(values, dtype=np.float64), requires_grad=True)
        t.grad = np.zeros_like(t.data)
        self._entries[name] = t
        return t

    def merge(self, prefix: str, other: "ParamVector") -> None:
        for name, t in other._entries.items():
            key = f"{prefix}.{name}"
            if key in self._entries:
                raise ValueError(f"duplicate parameter name: {key}")
            self._entries[key] = t

    def names(self) -> list[str]:
        return list(self._entries)

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __iter__(self) -> Iterable[tuple[str, Tensor]]:
        return iter(self._entries.items())

    def num_params(self) -> int:
        return sum(t.data.size for t in self._entries.values())

    def zero_grad(self) -> None:
        for t in self._entries.values():
            t.grad = np.zeros_like(t.data)

    def check_finite(self) -> None:
        for name, t in self._entries.items():
            if not np.all(np.isfinite(t.data)):
                raise FloatingPointError(f"non-finite values in parameter {name}")

    def copy_data(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._entries.items()}

    def load_data(self, arrays: dict[str, np.ndarray]) -> None:
        for name, t in self._entries.items():
            src = arrays[name]
            if src.shape != t.data.shape:
                raise ValueError(f"shape mismatch for {name}: "
                                 f"{src.shape} vs {t.data.shape}")
            t.data[...] = src

    def clone(self) -> "ParamVector":
        pv = ParamVector()
        for name, t in self._entries.items():
            pv.add(name, t.data.copy())
        return pv

    def polyak_from(self, online: "ParamVector", tau: float) -> None:
        """self <- (1 - tau) * self + tau * online, entrywise."""
        for name, t in self._entries.items():
            t.data *= (1.0 - tau)
            t.data += tau * online[name].data


class Adam:
    """Adam on one ParamVector; reads leaf gradients, updates data in place."""

    def __init__(self, params: ParamVector, lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {name: np.zeros_like(t.data) for name, t in params}
        self._v = {name: np.zeros_like(t.data) for name, t in params}

    def step(self) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name, t in self.params:
            g = t.grad
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            t.data -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


# ---------------------------------------------------------------------------
# Finite-difference verification
# ---------------------------------------------------------------------------


def grad_check(fn: Callable[[], Tensor], params: ParamVector,
               eps: float = 1e-5) -> float:
    """Max relative error between reverse-mode and central-difference grads.

    ``fn`` must rebuild the scalar objective from the current parameter
    values on every call (pure in the parameters).  Relative error per
    entry is |ad - fd| / max(|ad|, |fd|, 1e-6).
    """
    if not 1e-6 <= eps <= 1e-3:
        raise ValueError("eps must be in [1e-6, 1e-3]")
    params.zero_grad()
    out = fn()
    if not np.isfinite(out.data):
        raise FloatingPointError("non-finite function value in grad_check")
    out.backward()
    analytic = {name: t.grad.copy() for name, t in params}

    worst = 0.0
    for name, t in params:
        flat = t.data.reshape(-1)
        fd = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            h = eps * max(1.0, abs(orig))
            flat[i] = orig + h
            f_plus = float(fn().data)
            flat[i] = orig - h
            f_minus = float(fn().data)
            flat[i] = orig
            fd[i] = (f_plus - f_minus) / (2.0 * h)
        a = analytic[name].reshape(-1)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(fd)), 1e-6)
        worst = max(worst, float(np.max(np.abs(a - fd) / denom)))
    return worst
