"""Dense tensors with a define-by-run reverse-mode tape.

Every differentiable operator in the package goes through :func:`record`,
which attaches a backward closure to the output.  The graph is rebuilt on
every forward pass; :func:`backward` walks it once in reverse topological
order.

4-D image data is laid out as ``(batch, channel, height, width)``.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "record",
    "backward",
    "zero_grad",
    "tensor",
    "add",
    "sub",
    "mul",
    "scale",
    "neg",
    "square",
    "absolute",
    "tsum",
    "mean",
    "reshape",
    "concat",
    "take_channels",
    "crop",
]


class ShapeError(ValueError):
    """Operator received inputs with incompatible shapes."""


def _shape_error(op: str, *shapes) -> ShapeError:
    desc = ", ".join(str(tuple(s)) for s in shapes)
    return ShapeError(f"{op}: incompatible shapes {desc}")


class Tensor:
    """An immutable array value that may participate in the tape.

    ``data`` is a contiguous float ndarray.  Leaves created with
    ``requires_grad=True`` are parameters; their ``grad`` field accumulates
    across backward passes until :func:`zero_grad` is called.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        if any(n < 1 for n in arr.shape):
            raise ShapeError(f"tensor extents must be >= 1, got {arr.shape}")
        self.data = np.require(arr, requirements="C")
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.op = "leaf"
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{tag})"

    # Identity-based hashing: tensors key the gradient map.
    __hash__ = object.__hash__

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other, self), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)


def tensor(data, requires_grad: bool = False, name: str | None = None, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name, dtype=dtype)


def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x), dtype=dtype)


def record(
    op: str,
    data: np.ndarray,
    inputs: Sequence[Tensor],
    grad_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]],
) -> Tensor:
    """Wrap ``data`` as the output of ``op`` applied to ``inputs``.

    ``grad_fn`` maps the upstream gradient to one gradient per input (or
    ``None`` for inputs that need none).  Whatever forward values the rule
    needs must be captured by the closure.  If no input requires a
    gradient, nothing is recorded and a constant is returned.
    """
    out = Tensor(data)
    if any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.op = op
        out._parents = tuple(inputs)
        out._backward = grad_fn
    return out


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, params: Iterable[Tensor] | None = None) -> dict[Tensor, np.ndarray]:
    """Back-propagate from the scalar ``loss``.

    Returns a map from every reachable leaf with ``requires_grad`` to its
    gradient for this pass, and accumulates the same value into ``.grad``.
    Parameters passed in ``params`` that the loss does not reach get a
    zero entry.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    result: dict[Tensor, np.ndarray] = {}
    if loss.requires_grad:
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for node in reversed(_topo_order(loss)):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                result[node] = g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if pg.shape != parent.shape:
                    raise _shape_error(f"backward[{node.op}]", pg.shape, parent.shape)
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
    for leaf, g in result.items():
        leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g
    if params is not None:
        for p in params:
            if p not in result:
                result[p] = np.zeros_like(p.data)
    return result


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# elementwise and structural primitives


def add(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a)
    if b.data.size == 1 and a.shape != b.shape:
        data = a.data + b.data.reshape(())
        return record("add", data, (a, b), lambda g: (g, np.asarray(g.sum()).reshape(b.shape)))
    if a.shape != b.shape:
        raise _shape_error("add", a.shape, b.shape)
    return record("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a)
    if a.shape != b.shape:
        raise _shape_error("sub", a.shape, b.shape)
    return record("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    if not isinstance(b, Tensor) and np.ndim(b) == 0:
        return scale(a, float(b))
    if not isinstance(a, Tensor) and np.ndim(a) == 0:
        return scale(b, float(a))
    a = _as_tensor(a)
    b = _as_tensor(b, a)
    if a.shape != b.shape:
        raise _shape_error("mul", a.shape, b.shape)
    ad, bd = a.data, b.data
    return record("mul", ad * bd, (a, b), lambda g: (g * bd, g * ad))


def scale(a: Tensor, factor: float) -> Tensor:
    return record("scale", a.data * factor, (a,), lambda g: (g * factor,))


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


def square(a: Tensor) -> Tensor:
    ad = a.data
    return record("square", ad * ad, (a,), lambda g: (2.0 * ad * g,))


def absolute(a: Tensor) -> Tensor:
    ad = a.data
    return record("abs", np.abs(ad), (a,), lambda g: (np.sign(ad) * g,))


def tsum(a: Tensor) -> Tensor:
    shape = a.shape
    return record("sum", np.asarray(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, shape).copy(),))


def mean(a: Tensor) -> Tensor:
    n = a.data.size
    shape = a.shape
    return record(
        "mean", np.asarray(a.data.mean()), (a,), lambda g: (np.full(shape, g / n, dtype=a.dtype),)
    )


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = a.shape
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise _shape_error("reshape", old, shape) from None
    return record("reshape", data, (a,), lambda g: (g.reshape(old),))


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = list(tensors)
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(
            t.shape[i] != ref[i] for i in range(len(ref)) if i != axis % len(ref)
        ):
            raise _shape_error("concat", *(x.shape for x in tensors))
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return record("concat", np.concatenate([t.data for t in tensors], axis=axis), tensors, grad_fn)


def take_channels(a: Tensor, start: int, stop: int) -> Tensor:
    """Channel slice ``a[:, start:stop]`` of a 4-D tensor."""
    if a.ndim != 4 or not (0 <= start < stop <= a.shape[1]):
        raise ShapeError(f"take_channels: cannot take [{start}:{stop}] from {a.shape}")
    shape = a.shape

    def grad_fn(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[:, start:stop] = g
        return (full,)

    return record("take_channels", np.ascontiguousarray(a.data[:, start:stop]), (a,), grad_fn)


def crop(a: Tensor, top: int, left: int, height: int, width: int) -> Tensor:
    """Spatial window of a 4-D tensor."""
    _, _, h, w = a.shape
    if top < 0 or left < 0 or top + height > h or left + width > w:
        raise ShapeError(f"crop: window ({top},{left},{height},{width}) outside {a.shape}")
    shape = a.shape

    def grad_fn(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[:, :, top : top + height, left : left + width] = g
        return (full,)

    data = np.ascontiguousarray(a.data[:, :, top : top + height, left : left + width])
    return record("crop", data, (a,), grad_fn)
