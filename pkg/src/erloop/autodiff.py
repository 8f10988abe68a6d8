"""Reverse-mode automatic differentiation over numpy arrays.

A small tape: every operation records its inputs and a backward rule, and
the rules are themselves written in traced operations, so a gradient is
again a differentiable node. That closure property is what lets a training
loss contain gradient-based attribution scores and still be differentiated
with respect to model parameters (double backprop).

Everything is float64 and runs on the CPU, so results are bit-for-bit
reproducible. Only the operations the classifier and its attribution math
need are implemented.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

Array = np.ndarray


class Tensor:
    """A float64 array plus the bookkeeping reverse mode needs."""

    __slots__ = ("data", "parents", "rule", "requires_grad")

    def __init__(
        self,
        data,
        parents: tuple["Tensor", ...] = (),
        rule: Callable[["Tensor"], tuple["Tensor | None", ...]] | None = None,
        requires_grad: bool = False,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.parents = parents
        self.rule = rule
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def item(self) -> float:
        return float(self.data)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def reshape(self, shape) -> "Tensor":
        return reshape(self, shape)

    def __add__(self, other):
        return add(self, as_tensor(other))

    def __radd__(self, other):
        return add(as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, as_tensor(other))

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, as_tensor(other))

    def __rmul__(self, other):
        return mul(as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, as_tensor(other))

    def __rtruediv__(self, other):
        return div(as_tensor(other), self)

    def __matmul__(self, other):
        return matmul(self, as_tensor(other))

    def __neg__(self):
        return neg(self)

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def leaf(data) -> Tensor:
    """A parameter/input node gradients can be taken with respect to."""
    return Tensor(data, requires_grad=True)


def constant(data) -> Tensor:
    return Tensor(data)


# ---------------------------------------------------------------------------
# operations


def _unbroadcast(g: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Sum a cotangent down to the shape of the parent it belongs to."""
    extra = g.data.ndim - len(shape)
    if extra > 0:
        g = tsum(g, axis=tuple(range(extra)))
    axes = tuple(
        i for i, (gd, sd) in enumerate(zip(g.data.shape, shape)) if sd == 1 and gd != 1
    )
    if axes:
        g = tsum(g, axis=axes, keepdims=True)
    if g.data.shape != tuple(shape):
        g = reshape(g, shape)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    def rule(g: Tensor):
        return (
            _unbroadcast(g, a.shape) if a.requires_grad else None,
            _unbroadcast(g, b.shape) if b.requires_grad else None,
        )

    return Tensor(a.data + b.data, (a, b), rule)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def rule(g: Tensor):
        return (
            _unbroadcast(g, a.shape) if a.requires_grad else None,
            _unbroadcast(neg(g), b.shape) if b.requires_grad else None,
        )

    return Tensor(a.data - b.data, (a, b), rule)


def neg(a: Tensor) -> Tensor:
    def rule(g: Tensor):
        return (neg(g) if a.requires_grad else None,)

    return Tensor(-a.data, (a,), rule)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def rule(g: Tensor):
        return (
            _unbroadcast(mul(g, b), a.shape) if a.requires_grad else None,
            _unbroadcast(mul(g, a), b.shape) if b.requires_grad else None,
        )

    return Tensor(a.data * b.data, (a, b), rule)


def div(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data / b.data, (a, b))

    def rule(g: Tensor):
        ga = _unbroadcast(div(g, b), a.shape) if a.requires_grad else None
        gb = (
            _unbroadcast(neg(div(mul(g, out), b)), b.shape)
            if b.requires_grad
            else None
        )
        return (ga, gb)

    out.rule = rule
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul supports 2-D operands only")

    def rule(g: Tensor):
        return (
            matmul(g, transpose(b)) if a.requires_grad else None,
            matmul(transpose(a), g) if b.requires_grad else None,
        )

    return Tensor(a.data @ b.data, (a, b), rule)


def transpose(a: Tensor) -> Tensor:
    def rule(g: Tensor):
        return (transpose(g) if a.requires_grad else None,)

    return Tensor(a.data.T, (a,), rule)


def tanh(a: Tensor) -> Tensor:
    out = Tensor(np.tanh(a.data), (a,))

    def rule(g: Tensor):
        if not a.requires_grad:
            return (None,)
        return (mul(g, sub(constant(1.0), mul(out, out))),)

    out.rule = rule
    return out


def exp(a: Tensor) -> Tensor:
    out = Tensor(np.exp(a.data), (a,))

    def rule(g: Tensor):
        return (mul(g, out) if a.requires_grad else None,)

    out.rule = rule
    return out


def log(a: Tensor) -> Tensor:
    def rule(g: Tensor):
        return (div(g, a) if a.requires_grad else None,)

    return Tensor(np.log(a.data), (a,), rule)


def tabs(a: Tensor) -> Tensor:
    # subgradient: sign(a), 0 exactly at the kink
    sign = np.sign(a.data)

    def rule(g: Tensor):
        return (mul(g, constant(sign)) if a.requires_grad else None,)

    return Tensor(np.abs(a.data), (a,), rule)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def rule(g: Tensor):
        if not a.requires_grad:
            return (None,)
        gg = g
        if not keepdims and axis is not None:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            kept = list(a.data.shape)
            for ax in axes:
                kept[ax % a.data.ndim] = 1
            gg = reshape(gg, tuple(kept))
        elif not keepdims and axis is None:
            gg = reshape(gg, (1,) * a.data.ndim)
        return (broadcast_to(gg, a.shape),)

    return Tensor(out_data, (a,), rule)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)

    def rule(g: Tensor):
        return (reshape(g, a.shape) if a.requires_grad else None,)

    return Tensor(a.data.reshape(shape), (a,), rule)


def broadcast_to(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)

    def rule(g: Tensor):
        return (_unbroadcast(g, a.shape) if a.requires_grad else None,)

    return Tensor(np.broadcast_to(a.data, shape).copy(), (a,), rule)


def tmax(a: Tensor, axis: int) -> Tensor:
    """Max along an axis, keepdims. Ties route the gradient to the first max."""
    out_data = a.data.max(axis=axis, keepdims=True)
    hot = np.zeros_like(a.data)
    np.put_along_axis(hot, np.expand_dims(a.data.argmax(axis=axis), axis), 1.0, axis=axis)

    def rule(g: Tensor):
        return (mul(g, constant(hot)) if a.requires_grad else None,)

    return Tensor(out_data, (a,), rule)


def maximum_const(a: Tensor, floor: float) -> Tensor:
    """max(a, floor) elementwise; gradient passes only where a > floor."""
    mask = (a.data > floor).astype(np.float64)

    def rule(g: Tensor):
        return (mul(g, constant(mask)) if a.requires_grad else None,)

    return Tensor(np.maximum(a.data, floor), (a,), rule)


def gather(table: Tensor, index: Array) -> Tensor:
    """Row lookup table[index]; reverse is a scatter-add into the table."""
    index = np.asarray(index)

    def rule(g: Tensor):
        return (scatter_rows(g, index, table.shape) if table.requires_grad else None,)

    return Tensor(table.data[index], (table,), rule)


def scatter_rows(src: Tensor, index: Array, table_shape: tuple[int, ...]) -> Tensor:
    """Sum rows of src into a zero table at the given indices (gather adjoint)."""
    index = np.asarray(index)
    out = np.zeros(table_shape, dtype=np.float64)
    np.add.at(out, index.reshape(-1), src.data.reshape(-1, table_shape[-1]))

    def rule(g: Tensor):
        return (gather(g, index) if src.requires_grad else None,)

    return Tensor(out, (src,), rule)


# ---------------------------------------------------------------------------
# backward


def grad(
    output: Tensor, wrt: Sequence[Tensor], create_graph: bool = False
) -> list[Tensor]:
    """Gradients of a scalar output with respect to each tensor in wrt.

    With create_graph=True the results stay attached to the tape and can be
    differentiated again; otherwise they are detached constants. Tensors in
    wrt that the output does not depend on get zero gradients.
    """
    if output.data.size != 1:
        raise ValueError("grad expects a scalar output")

    # postorder DFS over the requires_grad subgraph
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    cot: dict[int, Tensor] = {id(output): constant(np.ones_like(output.data))}
    for node in reversed(topo):
        g = cot.get(id(node))
        if g is None or node.rule is None:
            continue
        for parent, pg in zip(node.parents, node.rule(g)):
            if pg is None or not parent.requires_grad:
                continue
            held = cot.get(id(parent))
            cot[id(parent)] = pg if held is None else add(held, pg)

    results = []
    for w in wrt:
        g = cot.get(id(w))
        if g is None:
            g = constant(np.zeros_like(w.data))
        results.append(g if create_graph else g.detach())
    return results
