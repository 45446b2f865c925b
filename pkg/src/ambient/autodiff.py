"""Tape-free reverse-mode differentiation over numpy arrays.

Each :class:`Var` keeps its parents and a closure that pushes the upstream
gradient to them. :meth:`Var.backward` topologically sorts the graph and runs
the closures in reverse. Only real-valued arrays flow through the graph;
complex linear operators enter through :func:`linear`, which packs real and
imaginary parts along a trailing axis of size 2.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


class Var:
    __slots__ = ("value", "grad", "_parents", "_backward", "requires_grad")
    __array_priority__ = 100

    def __init__(self, value, parents=(), backward=None, requires_grad=False):
        self.value = np.asarray(value, dtype=np.float64) if not isinstance(value, np.ndarray) else value
        self.grad = None
        self._parents = parents
        self._backward = backward
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    def __repr__(self):
        return f"Var(shape={self.value.shape})"

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def _accum(self, g):
        if not self.requires_grad:
            return
        g = _unbroadcast(g, self.value.shape)
        self.grad = g.copy() if self.grad is None else self.grad + g

    def backward(self, seed=None):
        """Propagate ``seed`` (default 1 for scalars) back through the graph."""
        if seed is None:
            if self.value.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            seed = np.ones_like(self.value)
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        for node in order:
            if node is not self:
                node.grad = None
        self.grad = np.asarray(seed, dtype=np.float64).reshape(self.value.shape).copy()
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # arithmetic ---------------------------------------------------------------

    def __add__(self, other):
        other = lift(other)

        def back(g):
            self._accum(g)
            other._accum(g)

        return Var(self.value + other.value, (self, other), back)

    __radd__ = __add__

    def __neg__(self):
        return Var(-self.value, (self,), lambda g: self._accum(-g))

    def __sub__(self, other):
        return self + (-lift(other))

    def __rsub__(self, other):
        return lift(other) + (-self)

    def __mul__(self, other):
        other = lift(other)

        def back(g):
            self._accum(g * other.value)
            other._accum(g * self.value)

        return Var(self.value * other.value, (self, other), back)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = lift(other)

        def back(g):
            self._accum(g / other.value)
            other._accum(-g * self.value / other.value**2)

        return Var(self.value / other.value, (self, other), back)

    def __rtruediv__(self, other):
        return lift(other) / self

    def __pow__(self, k: float):
        def back(g):
            self._accum(g * k * self.value ** (k - 1))

        return Var(self.value**k, (self,), back)

    def __matmul__(self, other):
        other = lift(other)

        def back(g):
            # vectors are promoted to matrices as np.matmul does
            a = self.value[None, :] if self.value.ndim == 1 else self.value
            b = other.value[:, None] if other.value.ndim == 1 else other.value
            gm = g
            if other.value.ndim == 1:
                gm = gm[..., None]
            if self.value.ndim == 1:
                gm = gm[..., None, :]
            ga = gm @ np.swapaxes(b, -1, -2)
            gb = np.swapaxes(a, -1, -2) @ gm
            self._accum(ga.reshape(ga.shape[:-2] + (-1,)) if self.value.ndim == 1 else ga)
            other._accum(gb[..., 0] if other.value.ndim == 1 else gb)

        return Var(self.value @ other.value, (self, other), back)

    def __rmatmul__(self, other):
        return lift(other) @ self

    def sum(self, axis=None, keepdims=False):
        shape = self.value.shape

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accum(np.broadcast_to(g, shape))

        return Var(self.value.sum(axis=axis, keepdims=keepdims), (self,), back)

    def mean(self, axis=None):
        n = self.value.size if axis is None else np.prod([self.value.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis) * (1.0 / n)

    def reshape(self, *shape):
        old = self.value.shape
        return Var(self.value.reshape(*shape), (self,), lambda g: self._accum(g.reshape(old)))

    def __getitem__(self, idx):
        shape = self.value.shape

        def back(g):
            full = np.zeros(shape)
            np.add.at(full, idx, g)
            self._accum(full)

        return Var(self.value[idx], (self,), back)


def lift(x) -> Var:
    return x if isinstance(x, Var) else Var(np.asarray(x, dtype=np.float64))


def leaf(x) -> Var:
    """A differentiable input."""
    return Var(np.array(x, dtype=np.float64), requires_grad=True)


def tanh(x: Var) -> Var:
    out = np.tanh(x.value)
    return Var(out, (x,), lambda g: x._accum(g * (1.0 - out**2)))


def exp(x: Var) -> Var:
    out = np.exp(x.value)
    return Var(out, (x,), lambda g: x._accum(g * out))


def log(x: Var) -> Var:
    return Var(np.log(x.value), (x,), lambda g: x._accum(g / x.value))


def sqrt(x: Var) -> Var:
    out = np.sqrt(x.value)
    return Var(out, (x,), lambda g: x._accum(g * 0.5 / out))


def abs_(x: Var) -> Var:
    return Var(np.abs(x.value), (x,), lambda g: x._accum(g * np.sign(x.value)))


def concat(parts, axis=-1) -> Var:
    parts = [lift(p) for p in parts]
    sizes = np.cumsum([p.value.shape[axis] for p in parts])[:-1]

    def back(g):
        for p, piece in zip(parts, np.split(g, sizes, axis=axis)):
            p._accum(piece)

    return Var(np.concatenate([p.value for p in parts], axis=axis), tuple(parts), back)


def to_complex(x: np.ndarray) -> np.ndarray:
    return x[..., 0] + 1j * x[..., 1]


def to_real(z: np.ndarray) -> np.ndarray:
    return np.stack((z.real, z.imag), axis=-1)


def linear(x: Var, op, complex_: bool) -> Var:
    """Apply a linear operator. For ``complex_`` the trailing axis of ``x``
    holds (real, imag) and so does the output."""
    if complex_:
        out = to_real(op.apply(to_complex(x.value)))
        return Var(out, (x,), lambda g: x._accum(to_real(op.adjoint(to_complex(g)))))
    out = op.apply(x.value)
    if np.iscomplexobj(out):
        raise TypeError("operator returned complex values for a real input; pass complex_=True")
    return Var(out, (x,), lambda g: x._accum(np.real(op.adjoint(g))))


def grad(fn, *inputs):
    """Gradients of the scalar ``fn(*vars)`` with respect to every input."""
    vs = [leaf(x) for x in inputs]
    out = fn(*vs)
    if out.value.size != 1:
        raise ValueError(f"loss must be scalar, got shape {out.value.shape}")
    out.backward()
    return [np.zeros_like(v.value) if v.grad is None else v.grad for v in vs]
