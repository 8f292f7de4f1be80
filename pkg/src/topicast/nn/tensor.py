"""Reverse-mode differentiation over numpy arrays.

A :class:`Tensor` records the tensors it was computed from and a closure
mapping its output gradient to gradients for each parent. :func:`backward`
walks the recorded graph once in reverse topological order.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class NonFiniteError(FloatingPointError):
    """An operation produced NaN or Inf."""


class GraphError(RuntimeError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "parents", "backward_fn", "requires_grad", "name")

    def __init__(
        self,
        data,
        parents: Sequence["Tensor"] = (),
        backward_fn: Callable | None = None,
        requires_grad: bool = False,
        name: str | None = None,
    ):
        data = np.asarray(data, dtype=np.float64)
        if not np.isfinite(data).all():
            raise NonFiniteError(f"non-finite values in {name or 'tensor'} of shape {data.shape}")
        self.data = data
        self.grad = None
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in self.parents)
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, name={self.name!r})"

    # small conveniences used by model code
    def __add__(self, other):
        from .functional import add

        return add(self, other)

    def __getitem__(self, key):
        from .functional import getitem

        return getitem(self, key)

    def reshape(self, *shape):
        from .functional import reshape

        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return reshape(self, shape)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def constant(data) -> Tensor:
    return data if isinstance(data, Tensor) else Tensor(data)


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    state: dict[int, int] = {}
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        nid = id(node)
        if expanded:
            state[nid] = 2
            order.append(node)
            continue
        s = state.get(nid, 0)
        if s == 2:
            continue
        if s == 1:
            raise GraphError("cycle in computation graph")
        state[nid] = 1
        stack.append((node, True))
        for p in node.parents:
            ps = state.get(id(p), 0)
            if ps == 1:
                raise GraphError("cycle in computation graph")
            if ps == 0 and p.requires_grad:
                stack.append((p, False))
    return order


def backward(loss: Tensor, grad=None) -> list[Tensor]:
    """Fill ``.grad`` on every leaf that requires grad; return those leaves.

    ``grad`` defaults to ones, which for a scalar loss is d(loss)/d(loss).
    Leaf gradients are overwritten, not accumulated across calls.
    """
    order = _topological_order(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data) if grad is None else np.asarray(grad, float)}
    leaves = []
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if node.backward_fn is None:
            if node.requires_grad:
                node.grad = np.zeros_like(node.data) if g is None else g
                leaves.append(node)
            continue
        if g is None:
            continue
        pgrads = node.backward_fn(g)
        for p, pg in zip(node.parents, pgrads):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    return leaves
