"""Dense n-D tensor with reverse-mode autodiff over a closed op set.

Tensors wrap a contiguous NumPy array.  Differentiable operations are
subclasses of :class:`Function` registered by name in :data:`OPS`; each call
records a :class:`Node` on its output so that :meth:`Tensor.backward` can walk
the graph in reverse topological order.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Sequence

import numpy as np

_DEFAULT_DTYPE = np.float64
_GRAD_ENABLED = True
_MAC_COUNTERS: list[dict[str, int]] = []

OPS: dict[str, type["Function"]] = {}


class NonFiniteError(FloatingPointError):
    """An op produced NaN or Inf."""


class ShapeError(ValueError):
    pass


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype}")
    _DEFAULT_DTYPE = dtype.type


def get_default_dtype():
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def default_dtype(dtype) -> Iterator[None]:
    prev = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(prev)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


@contextlib.contextmanager
def count_macs() -> Iterator[dict[str, int]]:
    """Tally multiply-accumulates executed by forward ops, keyed by op name."""
    counter: dict[str, int] = {}
    _MAC_COUNTERS.append(counter)
    try:
        yield counter
    finally:
        _MAC_COUNTERS.remove(counter)


def add_macs(op: str, n: int) -> None:
    for counter in _MAC_COUNTERS:
        counter[op] = counter.get(op, 0) + int(n)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_node", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
                dtype = data.dtype
            else:
                dtype = _DEFAULT_DTYPE
        self.data = np.asarray(data, dtype=dtype, order="C")
        self.requires_grad = bool(requires_grad)
        self.grad: Tensor | None = None
        self._node: Node | None = None

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        rg = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{rg})"

    def __len__(self) -> int:
        return self.shape[0]

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return OPS["add"].apply(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return OPS["sub"].apply(self, other)

    def __rsub__(self, other):
        return OPS["sub"].apply(other, self)

    def __mul__(self, other):
        return OPS["mul"].apply(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return OPS["div"].apply(self, other)

    def __rtruediv__(self, other):
        return OPS["div"].apply(other, self)

    def __neg__(self):
        return OPS["scale"].apply(self, factor=-1.0)

    def __matmul__(self, other):
        return OPS["matmul"].apply(self, other)

    def __getitem__(self, index):
        return OPS["getitem"].apply(self, index=index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return OPS["reshape"].apply(self, shape=shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return OPS["transpose"].apply(self, axes=axes)

    def sum(self, axis=None, keepdims: bool = False):
        return OPS["sum"].apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return OPS["mean"].apply(self, axis=axis, keepdims=keepdims)

    # -- autodiff ---------------------------------------------------------
    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(leaf) into ``.grad`` of every leaf requiring grad."""
        if grad is None:
            if self.size != 1:
                raise ShapeError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=self.dtype)
        if grad.shape != self.shape:
            raise ShapeError(f"seed gradient shape {grad.shape} != {self.shape}")

        order = topological_order(self)
        grads: dict[int, np.ndarray] = {id(self): grad}
        for t in reversed(order):
            g = grads.pop(id(t), None)
            if g is None:
                continue
            node = t._node
            if node is None:
                if t.requires_grad:
                    if t.grad is None:
                        t.grad = Tensor(g.copy())
                    else:
                        t.grad = Tensor(t.grad.data + g)
                continue
            parent_grads = node.fn.backward(node.ctx, g)
            if not isinstance(parent_grads, tuple):
                parent_grads = (parent_grads,)
            for parent, pg in zip(node.parents, parent_grads):
                if pg is None or not _wants_grad(parent):
                    continue
                if pg.shape != parent.shape:
                    raise ShapeError(
                        f"{node.fn.name} backward produced {pg.shape} for input {parent.shape}"
                    )
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


def _wants_grad(t: Tensor) -> bool:
    return t.requires_grad or t._node is not None


def topological_order(root: Tensor) -> list[Tensor]:
    """Tensors reachable from ``root`` through recorded nodes, inputs first."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        if t._node is not None:
            for p in t._node.parents:
                if id(p) not in seen:
                    stack.append((p, False))
    return order


@dataclass
class Context:
    needs_input_grad: tuple[bool, ...] = ()
    saved: dict[str, Any] = field(default_factory=dict)

    def save(self, **kw) -> None:
        self.saved.update(kw)

    def __getattr__(self, name):
        try:
            return self.__dict__["saved"][name]
        except KeyError:
            raise AttributeError(name) from None


@dataclass
class Node:
    fn: type[Function]
    ctx: Context
    parents: tuple[Tensor, ...]


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype or _DEFAULT_DTYPE))


class Function:
    """Base for differentiable ops.

    Subclasses implement ``forward(ctx, *arrays, **kw) -> ndarray`` and
    ``backward(ctx, grad) -> tuple`` with one entry (or None) per input.
    """

    name = "function"

    @staticmethod
    def forward(ctx: Context, *args, **kwargs) -> np.ndarray:
        raise NotImplementedError

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs, **kwargs) -> Tensor:
        like = next((x for x in inputs if isinstance(x, Tensor)), None)
        tensors = tuple(as_tensor(x, like) for x in inputs)
        needs = tuple(_wants_grad(t) for t in tensors)
        ctx = Context(needs_input_grad=needs)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = cls.forward(ctx, *(t.data for t in tensors), **kwargs)
        if not np.all(np.isfinite(out)):
            raise NonFiniteError(f"{cls.name} produced non-finite values")
        result = Tensor(out, dtype=out.dtype)
        if _GRAD_ENABLED and any(needs):
            result._node = Node(cls, ctx, tensors)
        return result


def register(name: str) -> Callable[[type[Function]], type[Function]]:
    def deco(cls: type[Function]) -> type[Function]:
        if name in OPS:
            raise ValueError(f"op {name!r} registered twice")
        cls.name = name
        OPS[name] = cls
        return cls

    return deco


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def zeros(shape: Sequence[int], requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype or _DEFAULT_DTYPE), requires_grad=requires_grad)


def ones(shape: Sequence[int], requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype or _DEFAULT_DTYPE), requires_grad=requires_grad)
