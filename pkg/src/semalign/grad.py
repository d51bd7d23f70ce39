"""A small reverse-mode gradient engine over float64 numpy arrays.

Only the operations needed by the alignment losses and the MLP encoders are
supported. Anything else touching a :class:`Tensor` (for instance calling a
numpy ufunc on it) raises :class:`UnsupportedOpError` while the graph is being
built, so a bad graph never reaches the backward pass.

Usage::

    w = Param(np.eye(2), name="w")
    loss = 0.5 * gsum(w * w)
    value, (gw,) = value_and_grad(loss, [w])
"""

import contextlib

import numpy as np

from . import numerics


class UnsupportedOpError(TypeError):
    """An operation outside the supported set was applied to a Tensor."""


_FAULTS = {}
FAULTABLE_OPS = ("tanh", "exp", "log", "matmul", "logsumexp_rows")


@contextlib.contextmanager
def inject_fault(op, scale=1.001):
    """Scale the backward rule of ``op`` by ``scale``; used to test the checker."""
    if op not in FAULTABLE_OPS:
        raise ValueError(f"cannot inject a fault into {op!r}; choose from {FAULTABLE_OPS}")
    _FAULTS[op] = scale
    try:
        yield
    finally:
        _FAULTS.pop(op, None)


def _fault(op):
    return _FAULTS.get(op, 1.0)


class Tensor:
    __array_priority__ = 1000

    def __init__(self, value, parents=(), op="const", requires_grad=False):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents
        self.op = op
        self.requires_grad = requires_grad or any(
            p.requires_grad for p, _ in parents
        )
        self.grad = None

    @property
    def shape(self):
        return self.value.shape

    def item(self):
        return float(self.value)

    def __float__(self):
        return float(self.value)

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.shape})"

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        # mixed ndarray/Tensor arithmetic lands here; anything else is unsupported
        op = _UFUNC_OPS.get(ufunc.__name__)
        if op is None or method != "__call__" or kwargs:
            raise UnsupportedOpError(f"numpy ufunc {ufunc.__name__} is not differentiable here")
        return op(*inputs)

    def __array_function__(self, func, types, args, kwargs):
        raise UnsupportedOpError(f"numpy function {func.__name__} is not differentiable here")

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return take(self, idx)

    @property
    def T(self):
        return transpose(self)

    def backward(self):
        backward(self)


class Param(Tensor):
    """A learnable leaf. ``grad`` always has the shape of ``value``."""

    def __init__(self, value, name="param"):
        super().__init__(np.array(value, dtype=np.float64, copy=True), requires_grad=True, op="param")
        self.name = name
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.shape})"


def constant(x):
    if isinstance(x, Tensor):
        return x
    if isinstance(x, (int, float, np.ndarray, np.floating, np.integer, list, tuple)):
        return Tensor(x)
    raise UnsupportedOpError(f"cannot lift {type(x).__name__} into the graph")


def detach(x):
    return Tensor(constant(x).value)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _node(value, op, *links):
    return Tensor(value, parents=tuple(links), op=op)


# -- elementwise arithmetic ------------------------------------------------

def add(a, b):
    a, b = constant(a), constant(b)
    return _node(
        a.value + b.value, "add",
        (a, lambda g: _unbroadcast(g, a.shape)),
        (b, lambda g: _unbroadcast(g, b.shape)),
    )


def sub(a, b):
    a, b = constant(a), constant(b)
    return _node(
        a.value - b.value, "sub",
        (a, lambda g: _unbroadcast(g, a.shape)),
        (b, lambda g: _unbroadcast(-g, b.shape)),
    )


def mul(a, b):
    a, b = constant(a), constant(b)
    return _node(
        a.value * b.value, "mul",
        (a, lambda g: _unbroadcast(g * b.value, a.shape)),
        (b, lambda g: _unbroadcast(g * a.value, b.shape)),
    )


def div(a, b):
    a, b = constant(a), constant(b)
    out = a.value / b.value
    return _node(
        out, "div",
        (a, lambda g: _unbroadcast(g / b.value, a.shape)),
        (b, lambda g: _unbroadcast(-g * out / b.value, b.shape)),
    )


def power(a, exponent):
    a = constant(a)
    if isinstance(exponent, Tensor):
        raise UnsupportedOpError("tensor exponents are not supported")
    p = float(exponent)
    return _node(
        a.value ** p, "pow",
        (a, lambda g: g * p * a.value ** (p - 1.0)),
    )


def tanh(a):
    a = constant(a)
    out = np.tanh(a.value)
    return _node(out, "tanh", (a, lambda g: g * (1.0 - out * out) * _fault("tanh")))


def relu(a):
    a = constant(a)
    mask = a.value > 0
    return _node(a.value * mask, "relu", (a, lambda g: g * mask))


def exp(a):
    a = constant(a)
    out = np.exp(a.value)
    return _node(out, "exp", (a, lambda g: g * out * _fault("exp")))


def log(a):
    a = constant(a)
    return _node(np.log(a.value), "log", (a, lambda g: g / a.value * _fault("log")))


def maximum(a, floor):
    """Elementwise ``max(a, floor)`` for a constant floor; no gradient below it."""
    a = constant(a)
    mask = a.value >= floor
    return _node(np.maximum(a.value, floor), "maximum", (a, lambda g: g * mask))


def clip(a, lo, hi):
    a = constant(a)
    mask = (a.value >= lo) & (a.value <= hi)
    return _node(np.clip(a.value, lo, hi), "clip", (a, lambda g: g * mask))


# -- structural ------------------------------------------------------------

def matmul(a, b):
    a, b = constant(a), constant(b)
    return _node(
        a.value @ b.value, "matmul",
        (a, lambda g: g @ b.value.T * _fault("matmul")),
        (b, lambda g: a.value.T @ g),
    )


def transpose(a):
    a = constant(a)
    return _node(a.value.T, "transpose", (a, lambda g: g.T))


def take(a, idx):
    a = constant(a)

    def vjp(g):
        full = np.zeros_like(a.value)
        np.add.at(full, idx, g)
        return full

    return _node(a.value[idx], "take", (a, vjp))


def reshape(a, shape):
    a = constant(a)
    return _node(a.value.reshape(shape), "reshape", (a, lambda g: g.reshape(a.shape)))


def concat_rows(parts):
    parts = [constant(p) for p in parts]
    bounds = np.cumsum([0] + [p.shape[0] for p in parts])
    links = [
        (p, (lambda lo, hi: lambda g: g[lo:hi])(bounds[i], bounds[i + 1]))
        for i, p in enumerate(parts)
    ]
    return _node(np.concatenate([p.value for p in parts], axis=0), "concat", *links)


def diag(a):
    a = constant(a)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"diag needs a square matrix, got {a.shape}")
    return _node(np.diagonal(a.value).copy(), "diag", (a, lambda g: np.diag(g)))


# -- reductions ------------------------------------------------------------

def gsum(a, axis=None):
    a = constant(a)
    out = a.value.sum(axis=axis)

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, a.shape).copy()
        return np.broadcast_to(np.expand_dims(g, axis), a.shape).copy()

    return _node(out, "sum", (a, vjp))


def mean(a, axis=None):
    a = constant(a)
    n = a.value.size if axis is None else a.shape[axis]
    return gsum(a, axis) / float(n)


def logsumexp_rows(a):
    a = constant(a)
    top = a.value.max(axis=1, keepdims=True)
    e = np.exp(a.value - top)
    s = e.sum(axis=1, keepdims=True)
    soft = e / s
    return _node((top + np.log(s))[:, 0], "logsumexp_rows",
                 (a, lambda g: g[:, None] * soft * _fault("logsumexp_rows")))


def logsumexp(a):
    """Log-sum-exp over every entry of a vector."""
    a = constant(a)
    top = a.value.max()
    e = np.exp(a.value - top)
    s = e.sum()
    soft = e / s
    return _node(top + np.log(s), "logsumexp", (a, lambda g: g * soft))


def softmax_rows(a):
    a = constant(a)
    top = a.value.max(axis=1, keepdims=True)
    e = np.exp(a.value - top)
    out = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        return out * (g - np.sum(g * out, axis=1, keepdims=True))

    return _node(out, "softmax_rows", (a, vjp))


def softmax(a):
    """Softmax of a 1-D vector."""
    a = constant(a)
    e = np.exp(a.value - a.value.max())
    out = e / e.sum()
    return _node(out, "softmax", (a, lambda g: out * (g - np.sum(g * out))))


# -- fused geometry --------------------------------------------------------

def pairwise_sq_dists(a, b):
    a, b = constant(a), constant(b)
    d = numerics.pairwise_sq_dists(a.value, b.value)

    def vjp_a(g):
        return 2.0 * (g.sum(axis=1)[:, None] * a.value - g @ b.value)

    def vjp_b(g):
        return 2.0 * (g.sum(axis=0)[:, None] * b.value - g.T @ a.value)

    if a is b:
        return _node(d, "pairwise_sq_dists", (a, lambda g: vjp_a(g) + vjp_b(g)))
    return _node(d, "pairwise_sq_dists", (a, vjp_a), (b, vjp_b))


def _normalize_rows(a):
    a = constant(a)
    raw = np.sqrt(np.sum(a.value * a.value, axis=1))
    norms = np.maximum(raw, numerics.NORM_FLOOR)
    unit = a.value / norms[:, None]
    active = raw >= numerics.NORM_FLOOR

    def vjp(g):
        proj = np.sum(g * unit, axis=1, keepdims=True)
        out = (g - unit * proj * active[:, None]) / norms[:, None]
        return out

    return _node(unit, "normalize_rows", (a, vjp))


def cosine_similarity(a, b):
    a, b = constant(a), constant(b)
    an = _normalize_rows(a)
    bn = an if b is a else _normalize_rows(b)
    return matmul(an, transpose(bn))


def batch_variance(t):
    t = constant(t)
    n = t.shape[0]
    if n < 2:
        raise ValueError(f"batch variance needs at least 2 rows, got {n}")
    centered = t.value - t.value.mean(axis=0, keepdims=True)
    out = np.sum(centered * centered) / (n - 1)
    return _node(out, "batch_variance", (t, lambda g: g * 2.0 * centered / (n - 1)))


# -- backward --------------------------------------------------------------

def _topo_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(root):
    """Accumulate d(root)/d(leaf) into every reachable ``Param.grad``."""
    if root.value.size != 1:
        raise ValueError("backward needs a scalar root")
    adjoints = {id(root): np.ones_like(root.value)}
    for node in reversed(_topo_order(root)):
        g = adjoints.pop(id(node), None)
        if g is None:
            continue
        if isinstance(node, Param):
            node.grad = node.grad + g
            continue
        for parent, vjp in node.parents:
            if not parent.requires_grad:
                continue
            contrib = vjp(g)
            key = id(parent)
            adjoints[key] = adjoints[key] + contrib if key in adjoints else contrib


def value_and_grad(loss, params):
    """Run one backward pass from scalar ``loss``.

    Gradients are returned in the order of ``params`` and also stored on each
    ``Param.grad`` (previous contents are cleared first).
    """
    for p in params:
        p.zero_grad()
    backward(loss)
    grads = []
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise FloatingPointError(f"non-finite gradient for {p.name}")
        grads.append(p.grad)
    return float(loss.value), grads


_UFUNC_OPS = {
    "add": add,
    "subtract": sub,
    "multiply": mul,
    "true_divide": div,
    "divide": div,  # numpy >= 2 names true division "divide"
    "matmul": matmul,
}
