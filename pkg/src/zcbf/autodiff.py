"""Minimal reverse-mode tape for losses of the network outputs.

Losses are scalar functionals of the batched network value W (B,) and
input gradient G (B, n). This module differentiates such a loss with
respect to W and G; the parameter gradient then follows from the kernel
VJPs. Only the primitives a loss needs are supported: arithmetic with
constants or other nodes, tanh, square, mean, and row-wise dot products
against a constant matrix. Anything else raises UnsupportedPrimitive.
"""
from __future__ import annotations

import numpy as np


class UnsupportedPrimitive(TypeError):
    """An operation outside the supported loss-graph primitive set."""


def _const(v):
    if isinstance(v, Node):
        raise TypeError("expected a constant, got a Node")
    return np.asarray(v, dtype=np.float64)


class Node:
    __slots__ = ("value", "parents")

    def __init__(self, value, parents=()):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = tuple(parents)

    # keep numpy from silently coercing nodes into object arrays
    __array_ufunc__ = None

    def __array__(self, *args, **kwargs):
        raise UnsupportedPrimitive(
            "loss graphs cannot be passed to raw numpy functions; "
            "use the primitives in zcbf.autodiff"
        )

    def __add__(self, other):
        if isinstance(other, Node):
            return Node(self.value + other.value,
                        [(self, lambda g: g), (other, lambda g: g)])
        c = _const(other)
        return Node(self.value + c, [(self, lambda g: g)])

    __radd__ = __add__

    def __neg__(self):
        return Node(-self.value, [(self, lambda g: -g)])

    def __sub__(self, other):
        return self + (-other if isinstance(other, Node) else -_const(other))

    def __rsub__(self, other):
        return (-self) + _const(other)

    def __mul__(self, other):
        if isinstance(other, Node):
            a, b = self, other
            return Node(a.value * b.value,
                        [(a, lambda g: g * b.value), (b, lambda g: g * a.value)])
        c = _const(other)
        return Node(self.value * c, [(self, lambda g: g * c)])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Node):
            raise UnsupportedPrimitive("division by a node is not supported")
        c = _const(other)
        return Node(self.value / c, [(self, lambda g: g / c)])

    def __pow__(self, p):
        if p != 2:
            raise UnsupportedPrimitive("only squaring is supported")
        return square(self)


def leaf(value) -> Node:
    return Node(value)


def tanh(x):
    if not isinstance(x, Node):
        return np.tanh(x)
    t = np.tanh(x.value)
    return Node(t, [(x, lambda g: g * (1.0 - t * t))])


def square(x):
    if not isinstance(x, Node):
        return np.square(x)
    return Node(x.value * x.value, [(x, lambda g: g * (2.0 * x.value))])


def mean(x):
    if not isinstance(x, Node):
        return float(np.mean(x))
    size = x.value.size
    return Node(np.mean(x.value),
                [(x, lambda g: np.broadcast_to(g / size, x.value.shape))])


def rowdot(x, c):
    """Per-row dot product of a (B, n) quantity with a constant (B, n)."""
    if not isinstance(x, Node):
        return np.einsum("bn,bn->b", x, np.asarray(c, dtype=np.float64))
    c = _const(c)
    return Node(np.einsum("bn,bn->b", x.value, c),
                [(x, lambda g: g[:, None] * c)])


def grad(root: Node, leaves) -> list[np.ndarray]:
    """Gradients of a scalar root with respect to the given leaves.

    Leaves not reachable from the root get zero gradients.
    """
    if not isinstance(root, Node):
        raise UnsupportedPrimitive("loss did not evaluate to a graph node")
    if root.value.size != 1:
        raise ValueError("loss must be a scalar")
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            stack.append((parent, False))
    grads: dict[int, np.ndarray] = {id(root): np.ones_like(root.value)}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None:
            continue
        for parent, vjp_fn in node.parents:
            contrib = vjp_fn(g)
            prev = grads.get(id(parent))
            grads[id(parent)] = contrib if prev is None else prev + contrib
    return [grads.get(id(leaf_), np.zeros_like(leaf_.value)) for leaf_ in leaves]
