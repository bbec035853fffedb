"""Reverse-mode automatic differentiation on dynamically built expression graphs.

Values are 64-bit numpy arrays (32-bit under the global f32 flag).  The key
property is that ``backward`` emits *new graph nodes* rather than plain
numbers, so gradients are themselves differentiable: reverse-over-reverse
gives second, third, ... derivatives with a single mechanism.

Only scalar-with-tensor broadcasting is allowed; any other shape mix raises
``ShapeError``.  Non-finite results (log of a negative, division by zero)
propagate without clamping and are detectable via the node values.
"""

import numpy as np

from . import config


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class Graph:
    """Append-only arena of nodes.

    Node creation order gives the topological order.  A graph is intended to
    live for one training step and be discarded afterwards, which bounds
    memory without reference counting games.
    """

    def __init__(self):
        self.nodes = []

    def add(self, node):
        self.nodes.append(node)

    def __len__(self):
        return len(self.nodes)

    def __enter__(self):
        _graph_stack.append(self)
        return self

    def __exit__(self, *exc):
        _graph_stack.pop()
        return False


_graph_stack = [Graph()]
_id_counter = [0]


def current_graph():
    return _graph_stack[-1]


class Node:
    """One differentiable expression in a computation graph."""

    __slots__ = ("op", "inputs", "value", "requires_grad", "attrs", "_id")

    def __init__(self, op, inputs, value, requires_grad, attrs=None):
        self.op = op
        self.inputs = inputs
        self.value = value
        self.requires_grad = requires_grad
        self.attrs = attrs
        _id_counter[0] += 1
        self._id = _id_counter[0]
        current_graph().add(self)

    @property
    def shape(self):
        return self.value.shape

    def set_value(self, value):
        if self.op != "variable":
            raise ValueError("only variable nodes can be assigned")
        value = np.asarray(value, dtype=config.dtype())
        if value.shape != self.value.shape:
            raise ShapeError(
                f"variable shape {self.value.shape} vs assigned {value.shape}"
            )
        self.value = value

    def __repr__(self):
        return f"Node({self.op}, shape={self.value.shape}, id={self._id})"

    # arithmetic sugar; python numbers and arrays auto-wrap to constants
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __neg__(self):
        return neg(self)

    def __abs__(self):
        return absolute(self)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))


def _wrap(x):
    if isinstance(x, Node):
        return x
    return constant(x)


def constant(value):
    value = np.asarray(value, dtype=config.dtype())
    return Node("constant", (), value, requires_grad=False)


def variable(value, requires_grad=True):
    value = np.asarray(value, dtype=config.dtype())
    return Node("variable", (), value, requires_grad=requires_grad)


def _is_scalar(a):
    return a.size == 1


def _check_elementwise(op, a, b):
    if a.value.shape == b.value.shape:
        return
    if _is_scalar(a.value) or _is_scalar(b.value):
        return
    raise ShapeError(f"{op}: incompatible shapes {a.value.shape} and {b.value.shape}")


def _elementwise(op, a, b, fn):
    _check_elementwise(op, a, b)
    with np.errstate(all="ignore"):
        value = fn(a.value, b.value)
    return Node(op, (a, b), np.asarray(value, dtype=config.dtype()),
                a.requires_grad or b.requires_grad)


def _unary(op, a, fn, attrs=None):
    with np.errstate(all="ignore"):
        value = fn(a.value)
    return Node(op, (a,), np.asarray(value, dtype=config.dtype()),
                a.requires_grad, attrs)


def add(a, b):
    return _elementwise("add", _wrap(a), _wrap(b), np.add)


def sub(a, b):
    return _elementwise("sub", _wrap(a), _wrap(b), np.subtract)


def mul(a, b):
    return _elementwise("mul", _wrap(a), _wrap(b), np.multiply)


def div(a, b):
    return _elementwise("div", _wrap(a), _wrap(b), np.divide)


def power(a, exponent):
    exponent = float(exponent)
    return _unary("pow", a, lambda x: np.power(x, exponent),
                  attrs={"exponent": exponent})


def sqrt(a):
    return power(a, 0.5)


def neg(a):
    return _unary("neg", a, np.negative)


def exp(a):
    return _unary("exp", a, np.exp)


def log(a):
    return _unary("ln", a, np.log)


def sin(a):
    return _unary("sin", a, np.sin)


def cos(a):
    return _unary("cos", a, np.cos)


def tanh(a):
    return _unary("tanh", a, np.tanh)


def absolute(a):
    return _unary("abs", a, np.abs)


def reduce_sum(a):
    return _unary("sum", a, np.sum)


def reduce_mean(a):
    return _unary("mean", a, np.mean)


def reduce_max(a):
    return _unary("max", a, np.max)


def broadcast_to(a, shape):
    if not _is_scalar(a.value):
        raise ShapeError(f"broadcast requires a scalar, got shape {a.value.shape}")
    shape = tuple(shape)
    value = np.broadcast_to(a.value.reshape(()), shape).astype(config.dtype())
    return Node("broadcast", (a,), value.copy(), a.requires_grad,
                attrs={"shape": shape})


def matmul(a, b):
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise ShapeError(
            f"matmul requires 2-D operands, got {a.value.shape} and {b.value.shape}"
        )
    if a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(
            f"matmul: inner dimensions differ, {a.value.shape} and {b.value.shape}"
        )
    value = a.value @ b.value
    return Node("matmul", (a, b), value, a.requires_grad or b.requires_grad)


def transpose(a):
    if a.value.ndim != 2:
        raise ShapeError(f"transpose requires a 2-D operand, got {a.value.shape}")
    return Node("transpose", (a,), a.value.T.copy(), a.requires_grad)


_FORWARD = {
    "add": lambda v, n: v[0] + v[1],
    "sub": lambda v, n: v[0] - v[1],
    "mul": lambda v, n: v[0] * v[1],
    "div": lambda v, n: v[0] / v[1],
    "pow": lambda v, n: np.power(v[0], n.attrs["exponent"]),
    "neg": lambda v, n: -v[0],
    "exp": lambda v, n: np.exp(v[0]),
    "ln": lambda v, n: np.log(v[0]),
    "sin": lambda v, n: np.sin(v[0]),
    "cos": lambda v, n: np.cos(v[0]),
    "tanh": lambda v, n: np.tanh(v[0]),
    "abs": lambda v, n: np.abs(v[0]),
    "sum": lambda v, n: np.sum(v[0]),
    "mean": lambda v, n: np.mean(v[0]),
    "max": lambda v, n: np.max(v[0]),
    "broadcast": lambda v, n: np.broadcast_to(
        v[0].reshape(()), n.attrs["shape"]).copy(),
    "matmul": lambda v, n: v[0] @ v[1],
    "transpose": lambda v, n: v[0].T.copy(),
}


def forward(node):
    """Re-evaluate the subgraph below ``node`` and return its value.

    Needed after ``set_value`` on a variable; freshly built nodes already
    carry their values (construction is eager).
    """
    order = _topo_below(node, require_grad=False)
    with np.errstate(all="ignore"):
        for n in order:
            if n.op in ("constant", "variable"):
                continue
            vals = [i.value for i in n.inputs]
            n.value = np.asarray(_FORWARD[n.op](vals, n), dtype=config.dtype())
    return node.value


def _topo_below(root, require_grad=True):
    """Nodes below root in creation (= topological) order."""
    seen = set()
    stack = [root]
    collected = []
    while stack:
        n = stack.pop()
        if n._id in seen:
            continue
        if require_grad and not n.requires_grad:
            continue
        seen.add(n._id)
        collected.append(n)
        stack.extend(n.inputs)
    collected.sort(key=lambda n: n._id)
    return collected


def _fit_shape(g, target):
    """Reduce a gradient node to the shape of the operand it belongs to."""
    if g.value.shape == target.value.shape:
        return g
    if _is_scalar(target.value):
        s = reduce_sum(g)
        if target.value.shape != ():
            s = broadcast_to(s, target.value.shape)
        return s
    if _is_scalar(g.value):
        return broadcast_to(g, target.value.shape)
    raise ShapeError(
        f"gradient shape {g.value.shape} does not fit operand {target.value.shape}"
    )


def _sign_const(x):
    s = np.sign(x.value)  # subgradient 0 at the kink
    return constant(s)


def _argmax_mask(x):
    flat = x.value.reshape(-1)
    mask = np.zeros_like(flat)
    mask[int(np.argmax(flat))] = 1.0  # first argmax; deterministic tie-break
    return constant(mask.reshape(x.value.shape))


def _vjp(node, g):
    """Gradients of node's inputs given the adjoint g (all graph nodes)."""
    op = node.op
    a = node.inputs[0] if node.inputs else None
    if op == "add":
        return (g, g)
    if op == "sub":
        return (g, neg(g))
    if op == "mul":
        return (mul(g, node.inputs[1]), mul(g, a))
    if op == "div":
        b = node.inputs[1]
        return (div(g, b), neg(div(mul(g, a), mul(b, b))))
    if op == "pow":
        p = node.attrs["exponent"]
        if p == 1.0:
            return (g,)
        if p == 2.0:
            return (mul(g, mul(constant(2.0), a)),)
        return (mul(g, mul(constant(p), power(a, p - 1.0))),)
    if op == "neg":
        return (neg(g),)
    if op == "exp":
        return (mul(g, node),)
    if op == "ln":
        return (div(g, a),)
    if op == "sin":
        return (mul(g, cos(a)),)
    if op == "cos":
        return (neg(mul(g, sin(a))),)
    if op == "tanh":
        return (mul(g, sub(constant(1.0), mul(node, node))),)
    if op == "abs":
        return (mul(g, _sign_const(a)),)
    if op == "sum":
        return (broadcast_to(g, a.value.shape) if a.value.shape != () else g,)
    if op == "mean":
        scaled = div(g, constant(float(a.value.size)))
        return (broadcast_to(scaled, a.value.shape) if a.value.shape != () else scaled,)
    if op == "max":
        return (mul(g, _argmax_mask(a)),)
    if op == "broadcast":
        return (reduce_sum(g),)
    if op == "matmul":
        b = node.inputs[1]
        return (matmul(g, transpose(b)), matmul(transpose(a), g))
    if op == "transpose":
        return (transpose(g),)
    raise ValueError(f"no vjp for op {op!r}")


def backward(output, wrt):
    """Differentiate a scalar output with respect to each node in ``wrt``.

    Returns one new graph node per entry of ``wrt``, all computed in a single
    reverse traversal.  The returned nodes are themselves differentiable, so
    nesting backward gives higher-order derivatives.  A wrt node unreachable
    from the output yields a zero gradient (not an error).
    """
    if not _is_scalar(output.value):
        raise ShapeError(
            f"backward requires a scalar output, got shape {output.value.shape}"
        )
    for w in wrt:
        if not w.requires_grad:
            raise ValueError("wrt node does not require grad")
    order = _topo_below(output, require_grad=True)
    adjoint = {output._id: constant(np.ones_like(output.value))}
    for node in reversed(order):
        g = adjoint.get(node._id)
        if g is None or not node.inputs:
            continue
        input_grads = _vjp(node, g)
        for inp, ig in zip(node.inputs, input_grads):
            if not inp.requires_grad:
                continue
            ig = _fit_shape(ig, inp)
            prev = adjoint.get(inp._id)
            adjoint[inp._id] = ig if prev is None else add(prev, ig)
    results = []
    for w in wrt:
        g = adjoint.get(w._id)
        if g is None:
            g = constant(np.zeros_like(w.value))
        results.append(g)
    return results


def diff(u, x, order=1):
    """Per-sample derivative d^order u / dx^order as a new graph node.

    u must be scalar per sample (one column); x a variable node with the same
    batch layout.  Implemented as repeated reverse passes over the summed
    output, valid because sample rows are independent.
    """
    if order < 1:
        raise ValueError("order must be >= 1; use u directly for order 0")
    g = u
    for _ in range(order):
        g = backward(reduce_sum(g), [x])[0]
    return g


def nth_derivative(u, x, order):
    return diff(u, x, order=order)


def accumulate_gradients(loss_fn, batches):
    """Sum per-batch parameter gradients, scaled to match the union batch.

    ``loss_fn(batch)`` must build a fresh graph and return
    ``(scalar loss node, sequence of parameter nodes)`` where the loss is a
    mean over the batch samples.  The union-batch graph is never built.
    Returns plain numpy gradient arrays, one per parameter.
    """
    batches = list(batches)
    if not batches:
        raise ValueError("accumulate_gradients needs at least one batch")
    total = sum(len(b) for b in batches)
    grads = None
    for batch in batches:
        loss, params = loss_fn(batch)
        gs = backward(loss, list(params))
        w = len(batch) / total
        vals = [g.value * w for g in gs]
        if grads is None:
            grads = vals
        else:
            grads = [acc + v for acc, v in zip(grads, vals)]
    return grads
