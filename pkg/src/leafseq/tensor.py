"""Dense float tensors with reverse-mode automatic differentiation.

Everything is stored as numpy arrays (float64 by default, float32 available
through ``set_default_dtype``). Operations executed while a ``Graph`` is
active are recorded on a tape; ``backward`` replays the tape in reverse to
accumulate gradients. Shapes are static: vectors are 1-D, matrices 2-D.
"""

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform to the operation's rule."""


class ContractError(ValueError):
    """A precondition of the public API was violated."""


class NumericError(ArithmeticError):
    """A computation produced non-finite values."""


_default_dtype = np.float64


def set_default_dtype(dtype):
    global _default_dtype
    if dtype not in (np.float32, np.float64):
        raise ContractError(f"unsupported dtype {dtype!r}")
    _default_dtype = dtype


def get_default_dtype():
    return _default_dtype


class Tensor:
    """A dense n-dimensional value with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=_default_dtype)
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    def zero_grad(self):
        self.grad = None

    def item(self):
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar; all routing goes through the primitives below
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def reshape(self, shape):
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis=axis, keepdims=keepdims)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


class Node:
    """One recorded operation: kind, input tensors, output, backward rule."""

    __slots__ = ("kind", "inputs", "out", "backward_fn")

    def __init__(self, kind, inputs, out, backward_fn):
        self.kind = kind
        self.inputs = inputs
        self.out = out
        self.backward_fn = backward_fn


class Graph:
    """Tape of operation records in execution (topological) order."""

    def __init__(self):
        self.nodes = []
        self._produced = set()

    def __enter__(self):
        _graph_stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _graph_stack.pop()
        return False


_graph_stack = []


def _active_graph():
    return _graph_stack[-1] if _graph_stack else None


def _record(kind, inputs, out, backward_fn):
    g = _active_graph()
    if g is not None and out.requires_grad:
        g.nodes.append(Node(kind, inputs, out, backward_fn))
        g._produced.add(id(out))


def _unbroadcast(grad, shape):
    # Sum a broadcast gradient back down to the operand's shape.
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, (gd, sd) in enumerate(zip(grad.shape, shape)):
        if sd == 1 and gd != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


def _check_broadcast(kind, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------------------
# primitives


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("add", a.data, b.data)
    out = Tensor(a.data + b.data, requires_grad=a.requires_grad or b.requires_grad)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    _record("add", (a, b), out, bw)
    return out


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("sub", a.data, b.data)
    out = Tensor(a.data - b.data, requires_grad=a.requires_grad or b.requires_grad)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    _record("sub", (a, b), out, bw)
    return out


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("elementwise-mul", a.data, b.data)
    out = Tensor(a.data * b.data, requires_grad=a.requires_grad or b.requires_grad)

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    _record("elementwise-mul", (a, b), out, bw)
    return out


def div(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("div", a.data, b.data)
    out = Tensor(a.data / b.data, requires_grad=a.requires_grad or b.requires_grad)

    def bw(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        )

    _record("div", (a, b), out, bw)
    return out


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    A, B = a.data, b.data
    if A.ndim not in (1, 2) or B.ndim not in (1, 2):
        raise ShapeError(f"matmul: operands must be 1-D or 2-D, got {A.shape} @ {B.shape}")
    k_a = A.shape[-1]
    k_b = B.shape[0]
    if k_a != k_b:
        raise ShapeError(f"matmul: inner dimensions disagree, {A.shape} @ {B.shape}")
    out = Tensor(A @ B, requires_grad=a.requires_grad or b.requires_grad)

    def bw(g):
        if A.ndim == 2 and B.ndim == 2:
            return g @ B.T, A.T @ g
        if A.ndim == 2 and B.ndim == 1:
            return np.outer(g, B), A.T @ g
        if A.ndim == 1 and B.ndim == 2:
            return B @ g, np.outer(A, g)
        return g * B, g * A  # dot product, g is scalar

    _record("matmul", (a, b), out, bw)
    return out


def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: need at least one tensor")
    datas = [t.data for t in tensors]
    try:
        cat = np.concatenate(datas, axis=axis)
    except ValueError:
        raise ShapeError(
            f"concat: incompatible shapes {[d.shape for d in datas]} along axis {axis}"
        ) from None
    out = Tensor(cat, requires_grad=any(t.requires_grad for t in tensors))
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        pieces = []
        for i in range(len(sizes)):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(offsets[i], offsets[i + 1])
            pieces.append(g[tuple(idx)])
        return tuple(pieces)

    _record("concat", tuple(tensors), out, bw)
    return out


def _sigmoid_stable(x):
    x1 = np.atleast_1d(x)
    out = np.empty_like(x1)
    pos = x1 >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x1[pos]))
    ex = np.exp(x1[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out.reshape(x.shape)


def sigmoid(a):
    a = _as_tensor(a)
    y = _sigmoid_stable(a.data)
    out = Tensor(y, requires_grad=a.requires_grad)

    def bw(g):
        return (g * y * (1.0 - y),)

    _record("sigmoid", (a,), out, bw)
    return out


def tanh(a):
    a = _as_tensor(a)
    y = np.tanh(a.data)
    out = Tensor(y, requires_grad=a.requires_grad)

    def bw(g):
        return (g * (1.0 - y * y),)

    _record("tanh", (a,), out, bw)
    return out


def relu(a):
    a = _as_tensor(a)
    out = Tensor(np.maximum(a.data, 0.0), requires_grad=a.requires_grad)

    def bw(g):
        return (g * (a.data > 0),)

    _record("relu", (a,), out, bw)
    return out


def exp(a):
    a = _as_tensor(a)
    y = np.exp(a.data)
    out = Tensor(y, requires_grad=a.requires_grad)

    def bw(g):
        return (g * y,)

    _record("exp", (a,), out, bw)
    return out


def log(a):
    a = _as_tensor(a)
    out = Tensor(np.log(a.data), requires_grad=a.requires_grad)

    def bw(g):
        return (g / a.data,)

    _record("log", (a,), out, bw)
    return out


def softmax_rows(a):
    """Softmax along the last axis, max-subtracted for stability."""
    a = _as_tensor(a)
    if a.ndim not in (1, 2):
        raise ShapeError(f"softmax-rows: expects 1-D or 2-D input, got {a.shape}")
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y, requires_grad=a.requires_grad)

    def bw(g):
        s = (g * y).sum(axis=-1, keepdims=True)
        return (y * (g - s),)

    _record("softmax-rows", (a,), out, bw)
    return out


def embedding_lookup(table, ids):
    """Gather rows of ``table`` (|V| x d) by integer id."""
    table = _as_tensor(table)
    if table.ndim != 2:
        raise ShapeError(f"embedding-lookup: table must be 2-D, got {table.shape}")
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise ShapeError(f"embedding-lookup: ids must be 1-D, got shape {ids.shape}")
    rows = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= rows):
        bad = int(ids.min()) if ids.min() < 0 else int(ids.max())
        raise IndexError(f"embedding-lookup: id {bad} out of range for table with {rows} rows")
    out = Tensor(table.data[ids], requires_grad=table.requires_grad)

    def bw(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    _record("embedding-lookup", (table,), out, bw)
    return out


def slice_(a, start, stop, axis=0):
    a = _as_tensor(a)
    dim = a.shape[axis]
    if not (0 <= start <= stop <= dim):
        raise ShapeError(f"slice: [{start}:{stop}] out of bounds for axis {axis} of {a.shape}")
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    out = Tensor(a.data[idx], requires_grad=a.requires_grad)

    def bw(g):
        ga = np.zeros_like(a.data)
        ga[idx] = g
        return (ga,)

    _record("slice", (a,), out, bw)
    return out


def reduce_sum(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims), requires_grad=a.requires_grad)

    def bw(g):
        if axis is not None and not keepdims:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            for ax in sorted(ax % a.ndim for ax in axes):
                g = np.expand_dims(g, axis=ax)
        return (np.broadcast_to(g, a.shape).copy(),)

    _record("sum", (a,), out, bw)
    return out


def reduce_mean(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    out_data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size // max(out_data.size, 1)
    out = Tensor(out_data, requires_grad=a.requires_grad)

    def bw(g):
        if axis is not None and not keepdims:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            for ax in sorted(ax % a.ndim for ax in axes):
                g = np.expand_dims(g, axis=ax)
        return (np.broadcast_to(g, a.shape).copy() / count,)

    _record("mean", (a,), out, bw)
    return out


def broadcast_add_bias(m, bias):
    """Add a bias vector to every row of a matrix (or to a vector)."""
    m, bias = _as_tensor(m), _as_tensor(bias)
    if bias.ndim != 1 or m.shape[-1] != bias.shape[0]:
        raise ShapeError(f"broadcast-add-bias: {m.shape} + bias {bias.shape}")
    return add(m, bias)


def minimum(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("minimum", a.data, b.data)
    out = Tensor(np.minimum(a.data, b.data), requires_grad=a.requires_grad or b.requires_grad)

    def bw(g):
        take_a = a.data <= b.data  # ties route to the first operand
        return _unbroadcast(g * take_a, a.shape), _unbroadcast(g * ~take_a, b.shape)

    _record("minimum", (a, b), out, bw)
    return out


def maximum(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("maximum", a.data, b.data)
    out = Tensor(np.maximum(a.data, b.data), requires_grad=a.requires_grad or b.requires_grad)

    def bw(g):
        take_a = a.data >= b.data
        return _unbroadcast(g * take_a, a.shape), _unbroadcast(g * ~take_a, b.shape)

    _record("maximum", (a, b), out, bw)
    return out


def scatter_add(src, ids, size):
    """Sum 1-D ``src`` values into a zero vector of ``size`` at positions ``ids``.

    The transpose of embedding-lookup; used to route attention mass onto
    extended-vocabulary slots.
    """
    src = _as_tensor(src)
    if src.ndim != 1:
        raise ShapeError(f"scatter-add: src must be 1-D, got {src.shape}")
    ids = np.asarray(ids, dtype=np.int64)
    if ids.shape != src.shape:
        raise ShapeError(f"scatter-add: ids shape {ids.shape} != src shape {src.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= size):
        bad = int(ids.min()) if ids.min() < 0 else int(ids.max())
        raise IndexError(f"scatter-add: id {bad} out of range for size {size}")
    data = np.zeros(size, dtype=src.data.dtype)
    np.add.at(data, ids, src.data)
    out = Tensor(data, requires_grad=src.requires_grad)

    def bw(g):
        return (g[ids],)

    _record("scatter-add", (src,), out, bw)
    return out


def transpose(a):
    a = _as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose: expects a 2-D tensor, got {a.shape}")
    out = Tensor(a.data.T, requires_grad=a.requires_grad)

    def bw(g):
        return (g.T,)

    _record("transpose", (a,), out, bw)
    return out


def reshape(a, shape):
    a = _as_tensor(a)
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}") from None
    out = Tensor(data, requires_grad=a.requires_grad)

    def bw(g):
        return (g.reshape(a.shape),)

    _record("reshape", (a,), out, bw)
    return out


_PRIMITIVES = {
    "matmul": matmul,
    "add": add,
    "sub": sub,
    "elementwise-mul": mul,
    "div": div,
    "concat": concat,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "relu": relu,
    "exp": exp,
    "softmax-rows": softmax_rows,
    "log": log,
    "embedding-lookup": embedding_lookup,
    "slice": slice_,
    "sum": reduce_sum,
    "mean": reduce_mean,
    "broadcast-add-bias": broadcast_add_bias,
    "minimum": minimum,
    "maximum": maximum,
    "scatter-add": scatter_add,
    "transpose": transpose,
    "reshape": reshape,
}


def forward_primitive(kind, *inputs, **kwargs):
    """Dispatch one primitive by kind name (see ``_PRIMITIVES``)."""
    try:
        fn = _PRIMITIVES[kind]
    except KeyError:
        raise ContractError(f"unknown primitive kind {kind!r}") from None
    return fn(*inputs, **kwargs)


def backward(graph, loss):
    """Accumulate d(loss)/d(t) for every requires_grad tensor feeding ``loss``.

    Walks the tape in reverse execution order, which is an exact reverse
    topological order. Gradients fan in additively. Leaf tensors (those not
    produced by a recorded node) also get the result added into ``.grad``.
    Returns a map from Tensor to its gradient array.
    """
    if not isinstance(loss, Tensor):
        raise ContractError("backward: loss must be a Tensor")
    if loss.data.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.shape}")
    grads = {id(loss): np.ones_like(loss.data)}
    by_id = {id(loss): loss}
    for node in reversed(graph.nodes):
        g = grads.get(id(node.out))
        if g is None:
            continue
        for inp, gin in zip(node.inputs, node.backward_fn(g)):
            if gin is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gin
            else:
                grads[key] = gin
                by_id[key] = inp
    result = {}
    for key, g in grads.items():
        t = by_id[key]
        result[t] = g
        if key not in graph._produced:
            t.grad = g.copy() if t.grad is None else t.grad + g
    return result
