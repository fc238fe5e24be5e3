"""A small reverse-mode differentiation engine over numpy float64 arrays.

Each operation returns a :class:`Tensor` that remembers its parents and a
closure mapping the output gradient to parent gradients. :func:`backward`
walks the recorded graph in reverse topological order. Leaf tensors with
``requires_grad`` accumulate into ``.grad`` across calls; interior gradients
live only for the duration of one call.
"""

import numpy as np


class GraphError(RuntimeError):
    """backward() was called on something it cannot differentiate."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_grad_fn")

    def __init__(self, data, requires_grad=False, _parents=(), _grad_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._grad_fn = _grad_fn

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, grad_fn):
    parents = tuple(parents)
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, parents, grad_fn)
    return Tensor(data)


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -- elementwise -------------------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)),
    )


def mul(a, b):
    """Elementwise product; ``b`` may be a Python scalar."""
    a = as_tensor(a)
    if np.isscalar(b):
        c = float(b)
        return _make(a.data * c, (a,), lambda g: (g * c,))
    b = as_tensor(b)
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def square(a):
    a = as_tensor(a)
    return _make(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,))


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(a):
    """Tanh approximation of GELU."""
    a = as_tensor(a)
    x = a.data
    x2 = x * x
    th = x2 * 0.044715
    th += 1.0
    th *= x
    th *= _GELU_C
    np.tanh(th, out=th)
    out = th + 1.0
    out *= x
    out *= 0.5

    def grad_fn(g):
        # d/dx = 0.5 (1 + th) + 0.5 x (1 - th^2) C (1 + 3 * 0.044715 x^2)
        inner = x2 * (3 * 0.044715)
        inner += 1.0
        inner *= _GELU_C
        sech2 = th * th
        np.subtract(1.0, sech2, out=sech2)
        sech2 *= x
        sech2 *= inner
        sech2 += th
        sech2 += 1.0
        sech2 *= 0.5
        sech2 *= g
        return (sech2,)

    return _make(out, (a,), grad_fn)


def softmax(a, axis=-1):
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    return _make(y, (a,), lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),))


def grad_scale(a, lam):
    """Identity forward; multiplies the incoming gradient by ``lam`` on the way back."""
    lam = float(lam)
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"gradient scale must lie in [0, 1], got {lam}")
    a = as_tensor(a)
    return _make(a.data, (a,), lambda g: (g * lam,))


# -- linear algebra and shape ------------------------------------------------


def matmul(a, b):
    """``a @ b`` with numpy broadcasting over leading axes (operands at least 2-D)."""
    a, b = as_tensor(a), as_tensor(b)

    def grad_fn(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        if b.data.ndim == 2 and a.data.ndim > 2:
            # shared weight: fold the batch axes into one product
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(a.data @ b.data, (a, b), grad_fn)


def transpose(a):
    """Swap the last two axes."""
    a = as_tensor(a)
    return _make(np.swapaxes(a.data, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),))


def reshape(a, shape):
    a = as_tensor(a)
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    return _make(
        np.concatenate([t.data for t in tensors], axis=axis),
        tensors,
        lambda g: tuple(np.split(g, cuts, axis=axis)),
    )


def take_rows(table, ids):
    """Gather rows of a 2-D ``table``; output shape ``ids.shape + (cols,)``."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.intp)

    def grad_fn(g):
        out = np.zeros_like(table.data)
        np.add.at(out, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (out,)

    return _make(table.data[ids], (table,), grad_fn)


def select(a, index):
    """Basic (non-fancy) indexing, e.g. ``select(x, (slice(None), -1))``."""
    a = as_tensor(a)

    def grad_fn(g):
        out = np.zeros_like(a.data)
        out[index] = g
        return (out,)

    return _make(a.data[index], (a,), grad_fn)


# -- reductions --------------------------------------------------------------


def mean(a):
    a = as_tensor(a)
    n = a.data.size
    return _make(a.data.mean(), (a,), lambda g: (np.full(a.shape, g / n),))


def mse(pred, target):
    """Mean squared error over every element."""
    return mean(square(sub(pred, target)))


# -- reverse pass ------------------------------------------------------------


def _topo_order(root):
    order, seen = [], set()
    stack = [(root, False)]
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order[::-1]


def backward(loss):
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every reachable leaf.

    ``loss`` must be a scalar produced by recorded operations on tensors that
    require gradients.
    """
    if not isinstance(loss, Tensor):
        raise GraphError("backward() needs a Tensor")
    if loss.data.size != 1:
        raise GraphError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise GraphError("loss has no recorded graph (no input requires a gradient)")
    grads = {id(loss): np.ones_like(loss.data)}
    for node in _topo_order(loss):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._grad_fn is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._grad_fn(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
