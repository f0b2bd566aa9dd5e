"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every tensor produced by an operation on at least one ``requires_grad``
input records a :class:`Node` (inputs plus a backward rule). ``backward``
walks those nodes once, in reverse topological order, and accumulates
gradients into the leaves. A tape is single-use: running ``backward`` a
second time over the same nodes raises :class:`GraphError`.
"""
import numpy as np

from . import kernels
from .errors import ContractError, DomainError, GraphError

# primitive differentiable ops; every entry needs a gradient-check case
OPS = (
    "add", "sub", "mul", "div", "neg", "pow", "abs", "exp", "log", "sqrt",
    "clip", "minimum", "where", "floor_ste", "sign_ste", "sum", "reshape",
    "transpose", "getitem", "stack", "concatenate", "matmul",
    "bilinear_sample", "deformable_sample", "count_vector",
)


def _op(name):
    assert name in OPS, name
    return name


class Node:
    __slots__ = ("op", "inputs", "backward", "consumed")

    def __init__(self, op, inputs, backward):
        self.op = op
        self.inputs = inputs
        self.backward = backward
        self.consumed = False


class Tensor:
    """Row-major float64 array that can take part in differentiation."""

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False):
        arr = np.array(data, dtype=np.float64, order="C")
        if arr.ndim and 0 in arr.shape:
            raise ContractError(f"tensor dimensions must be positive, got {arr.shape}")
        self.data = arr
        self.data.flags.writeable = False
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.node = None

    # -- basic properties -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, shape is {self.shape}")
        return float(self.data.reshape(()))

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({np.array2string(self.data, precision=6)}{flag})"

    def __len__(self):
        return self.shape[0]

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)

    def abs(self):
        return tabs(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def sqrt(self):
        return sqrt(self)

    def backward(self):
        backward(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def custom_op(name, data, inputs, backward_fn):
    """Create a tensor from ``data`` with a caller-supplied backward rule.

    ``backward_fn(grad_out)`` returns one gradient (or ``None``) per input.
    """
    inputs = tuple(as_tensor(t) for t in inputs)
    out = Tensor(data)
    if any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.node = Node(name, inputs, backward_fn)
    return out


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ContractError(f"shapes {a.shape} and {b.shape} are not broadcast-compatible") from None


# -- elementwise ----------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    return custom_op(_op("add"), a.data + b.data, (a, b),
                     lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    return custom_op(_op("sub"), a.data - b.data, (a, b),
                     lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    return custom_op(_op("mul"), a.data * b.data, (a, b),
                     lambda g: (_unbroadcast(g * b.data, a.shape),
                                _unbroadcast(g * a.data, b.shape)))


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    if np.any(b.data == 0):
        raise DomainError("division by zero", operand=1)
    out = a.data / b.data
    return custom_op(_op("div"), out, (a, b),
                     lambda g: (_unbroadcast(g / b.data, a.shape),
                                _unbroadcast(-g * out / b.data, b.shape)))


def neg(a):
    a = as_tensor(a)
    return custom_op(_op("neg"), -a.data, (a,), lambda g: (-g,))


def power(a, exponent):
    """``a ** exponent`` for a constant real exponent."""
    a = as_tensor(a)
    p = float(exponent)
    if p != int(p) and np.any(a.data < 0):
        raise DomainError("fractional power of a negative value", operand=0)
    return custom_op(_op("pow"), a.data ** p, (a,),
                     lambda g: (g * p * a.data ** (p - 1.0),))


def tabs(a):
    """Absolute value; the backward rule uses sign(a), i.e. 0 at a == 0."""
    a = as_tensor(a)
    return custom_op(_op("abs"), np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return custom_op(_op("exp"), out, (a,), lambda g: (g * out,))


def log(a):
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise DomainError("log of a non-positive value", operand=0)
    return custom_op(_op("log"), np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a):
    a = as_tensor(a)
    if np.any(a.data < 0):
        raise DomainError("sqrt of a negative value", operand=0)
    out = np.sqrt(a.data)

    def bw(g):
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, 0.5 * g / safe, 0.0),)

    return custom_op(_op("sqrt"), out, (a,), bw)


def clip(a, lo, hi):
    """Clamp to [lo, hi]; gradient passes where lo <= a <= hi."""
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return custom_op(_op("clip"), np.clip(a.data, lo, hi), (a,),
                     lambda g: (np.where(inside, g, 0.0),))


def minimum(a, b):
    """Elementwise minimum; ties send the gradient to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    pick_a = a.data <= b.data
    return custom_op(_op("minimum"), np.minimum(a.data, b.data), (a, b),
                     lambda g: (_unbroadcast(np.where(pick_a, g, 0.0), a.shape),
                                _unbroadcast(np.where(pick_a, 0.0, g), b.shape)))


def where(cond, a, b):
    """Select ``a`` where the constant boolean ``cond`` holds, else ``b``."""
    a, b = as_tensor(a), as_tensor(b)
    cond = np.asarray(cond, dtype=bool)
    try:
        np.broadcast_shapes(cond.shape, a.shape, b.shape)
    except ValueError:
        raise ContractError(f"where: shapes {cond.shape}, {a.shape}, {b.shape} do not broadcast") from None
    return custom_op(_op("where"), np.where(cond, a.data, b.data), (a, b),
                     lambda g: (_unbroadcast(np.where(cond, g, 0.0), a.shape),
                                _unbroadcast(np.where(cond, 0.0, g), b.shape)))


def floor_ste(a):
    """Forward ``floor``; backward passes the gradient straight through."""
    a = as_tensor(a)
    return custom_op(_op("floor_ste"), np.floor(a.data), (a,), lambda g: (g,))


def htanh_surrogate(x):
    """Htanh(r) with r = 2x - 1: the function whose derivative sign_ste uses."""
    return np.clip(2.0 * np.asarray(x, dtype=np.float64) - 1.0, -1.0, 1.0)


def sign_ste(a, inclusive=False):
    """Forward ``sign``; backward is d/dx clip(2x - 1, -1, 1).

    The gradient is ``2 * g`` inside the band 0 < x < 1 and 0 elsewhere.
    ``inclusive=True`` closes the band to 0 <= x <= 1.
    """
    a = as_tensor(a)
    x = a.data
    band = (x >= 0.0) & (x <= 1.0) if inclusive else (x > 0.0) & (x < 1.0)
    return custom_op(_op("sign_ste"), np.sign(x), (a,),
                     lambda g: (np.where(band, 2.0 * g, 0.0),))


_ELEMENTWISE = {
    "add": add, "sub": sub, "mul": mul, "div": div, "abs": tabs, "exp": exp,
    "log": log, "sqrt": sqrt, "floor_ste": floor_ste, "sign_ste": sign_ste,
    "neg": neg, "minimum": minimum,
}


def elementwise(op, a, b=None, **kwargs):
    """Dispatch an elementwise op by name. ``clip`` takes ``lo``/``hi`` kwargs."""
    if op == "clip":
        return clip(a, kwargs.get("lo", -np.inf), kwargs.get("hi", np.inf))
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ContractError(f"unknown elementwise op {op!r}") from None
    if op in ("add", "sub", "mul", "div", "minimum"):
        if b is None:
            raise ContractError(f"{op} needs two operands")
        return fn(a, b)
    return fn(a, **kwargs)


# -- reductions -----------------------------------------------------------

def _norm_axes(axis, ndim):
    if axis is None:
        return None
    axes = (axis,) if np.isscalar(axis) else tuple(axis)
    out = []
    for ax in axes:
        ax = int(ax)
        if not -ndim <= ax < ndim:
            raise ContractError(f"axis {ax} out of range for rank {ndim}")
        out.append(ax % ndim)
    if len(set(out)) != len(out):
        raise ContractError(f"repeated axis in {axes}")
    return tuple(sorted(out))


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def bw(g):
        if axes is not None and not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return custom_op(_op("sum"), out, (a,), bw)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    count = a.size if axes is None else int(np.prod([a.shape[i] for i in axes]))
    return tsum(a, axes, keepdims) * (1.0 / count)


def l1_norm(a, axis=None):
    return tsum(tabs(a), axis)


def l2_norm_sq(a, axis=None):
    a = as_tensor(a)
    return tsum(a * a, axis)


_REDUCE = {"sum": tsum, "mean": mean, "l1_norm": l1_norm, "l2_norm_sq": l2_norm_sq}


def reduce(op, a, axes=None):
    """Dispatch a reduction by name over ``axes`` (all axes when ``None``)."""
    try:
        fn = _REDUCE[op]
    except KeyError:
        raise ContractError(f"unknown reduction {op!r}") from None
    return fn(a, axes)


# -- shape and indexing ---------------------------------------------------

def reshape(a, shape):
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ContractError(str(exc)) from None
    return custom_op(_op("reshape"), out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None):
    a = as_tensor(a)
    out = np.transpose(a.data, axes)
    inv = None if axes is None else np.argsort(axes)
    return custom_op(_op("transpose"), out, (a,), lambda g: (np.transpose(g, inv),))


def getitem(a, index):
    a = as_tensor(a)
    if isinstance(index, Tensor):
        index = index.data.astype(np.intp)
    out = a.data[index]

    def bw(g):
        full = np.zeros(a.shape)
        np.add.at(full, index, g)
        return (full,)

    return custom_op(_op("getitem"), out, (a,), bw)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return custom_op(_op("stack"), out, tensors, bw)


def concatenate(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    cuts = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, cuts, axis=axis))

    return custom_op(_op("concatenate"), out, tensors, bw)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ContractError(f"matmul needs (m,k)@(k,n), got {a.shape} and {b.shape}")
    return custom_op(_op("matmul"), a.data @ b.data, (a, b),
                     lambda g: (g @ b.data.T, a.data.T @ g))


# -- kernel-backed ops ----------------------------------------------------

def bilinear_sample(img, x, y):
    """Sample ``img`` (H, W, C) at pixel coordinates ``x``, ``y`` (M,).

    Coordinates are clamped to the image; returns an (M, C) tensor.
    Differentiable w.r.t. the image and both coordinate vectors.
    """
    img, x, y = as_tensor(img), as_tensor(x), as_tensor(y)
    if img.ndim != 3:
        raise ContractError(f"bilinear_sample expects (H, W, C), got {img.shape}")
    if x.shape != y.shape or x.ndim != 1:
        raise ContractError(f"coordinate vectors must be 1-D and equal, got {x.shape}, {y.shape}")
    out = kernels.bilinear_forward(img.data, x.data, y.data)

    def bw(g):
        return kernels.bilinear_backward(img.data, x.data, y.data, g)

    return custom_op(_op("bilinear_sample"), out, (img, x, y), bw)


def deformable_sample(src, offsets, weights):
    """Fused grouped deformable sampling on (C, H, W) maps.

    ``offsets`` is (G*2*n*n, H, W) with (dx, dy) pairs per tap, ``weights``
    is (G, n*n). Shapes are checked by the caller.
    """
    src, offsets, weights = as_tensor(src), as_tensor(offsets), as_tensor(weights)
    out = kernels.deform_forward(src.data, offsets.data, weights.data)

    def bw(g):
        return kernels.deform_backward(src.data, offsets.data, weights.data, g)

    return custom_op(_op("deformable_sample"), out, (src, offsets, weights), bw)


def count_vector(V, N, inclusive=False):
    """Counting vector C_i = n - ||sign_ste(|V - i|)||_1 for i in [0, N).

    Forward values equal the exact histogram of integer-valued entries of
    ``V``. The backward rule is the one obtained by composing the abs and
    sign_ste backward rules, evaluated in O(n) instead of O(n*N).
    """
    V = as_tensor(V)
    N = int(N)
    if N <= 0:
        raise ContractError(f"voxel count must be positive, got {N}")
    if V.ndim != 1:
        raise ContractError(f"index vector must be 1-D, got shape {V.shape}")
    out = kernels.count_forward(V.data, N)
    return custom_op(_op("count_vector"), out, (V,),
                     lambda g: (kernels.count_backward(V.data, g, inclusive),))


# -- tape -----------------------------------------------------------------

class Graph:
    """Nodes reachable from ``loss`` in topological order (inputs first)."""

    def __init__(self, loss):
        self.loss = loss
        order, seen = [], set()
        stack_ = [(loss, False)]
        while stack_:
            t, expanded = stack_.pop()
            if t.node is None:
                continue
            if expanded:
                order.append(t)
                continue
            if id(t) in seen:
                continue
            seen.add(id(t))
            stack_.append((t, True))
            for parent in t.node.inputs:
                if parent.node is not None and id(parent) not in seen:
                    stack_.append((parent, False))
        self.tensors = order

    @property
    def nodes(self):
        return [t.node for t in self.tensors]

    def backward(self):
        loss = self.loss
        if loss.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        if any(n.consumed for n in self.nodes):
            raise GraphError("graph already consumed by backward; rebuild it with a new forward pass")
        grads = {id(loss): np.ones(loss.shape)}
        if loss.node is None and loss.requires_grad:
            loss.grad = grads[id(loss)] if loss.grad is None else loss.grad + grads[id(loss)]
        for t in reversed(self.tensors):
            node = t.node
            node.consumed = True
            g = grads.pop(id(t), None)
            if g is None:
                continue
            in_grads = node.backward(g)
            for inp, ig in zip(node.inputs, in_grads):
                if ig is None or not inp.requires_grad:
                    continue
                ig = np.asarray(ig, dtype=np.float64)
                if inp.node is None:
                    inp.grad = ig.copy() if inp.grad is None else inp.grad + ig
                else:
                    key = id(inp)
                    grads[key] = grads[key] + ig if key in grads else ig


def backward(loss):
    """Populate ``.grad`` on every ``requires_grad`` leaf reachable from ``loss``."""
    Graph(loss).backward()
