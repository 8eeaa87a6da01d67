"""Reverse-mode automatic differentiation over float64 numpy arrays.

The operator set is small (enough for MLP training losses) but every
backward rule is itself written in terms of the same traced operators, so
gradients can be differentiated again.  That is what powers Hessian-vector
products (``hvp``) and meta-gradients through an unrolled inner SGD loop,
both of which are second-order quantities.

Tracing model: each ``grad`` call opens a fresh ``Tape``.  Values flowing
through operators are either raw ndarrays or ``Node``s belonging to one of
the currently open tapes.  An operator records onto the innermost tape any
of its arguments belongs to, and recursively re-dispatches on the unboxed
arguments, so nested tapes each see the computation at their own level.
With no open tape the operators are plain numpy and add no overhead beyond
a function call.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tape",
    "Node",
    "GradientError",
    "as_tensor",
    "grad",
    "value_and_grad",
    "hvp",
    "add",
    "sub",
    "neg",
    "mul",
    "matmul",
    "transpose",
    "reshape",
    "broadcast_to",
    "tsum",
    "tmean",
    "relu",
    "exp",
    "log",
    "power",
    "dot",
    "sqnorm",
]

# Set False to skip per-node NaN checks in the backward pass.
CHECK_NAN = True


class GradientError(ArithmeticError):
    """Non-finite value produced during a backward pass."""


def as_tensor(x, checked: bool = True) -> np.ndarray:
    """Coerce to a row-major float64 array, rejecting NaN/Inf when checked."""
    a = np.ascontiguousarray(x, dtype=np.float64)
    if checked and not np.all(np.isfinite(a)):
        raise ValueError("tensor contains non-finite entries")
    return a


_tape_counter = 0
_TAPES: list["Tape"] = []


class Tape:
    """Recorded primitive operations, in topological (creation) order.

    Replayability: nodes capture pure functions of their parents, so
    re-running the recorded function on identical inputs reproduces every
    node value bitwise.
    """

    __slots__ = ("nodes", "level")

    def __init__(self):
        global _tape_counter
        _tape_counter += 1
        self.level = _tape_counter
        self.nodes: list[Node] = []

    def leaf(self, value) -> "Node":
        return _record(self, value, (), ())


class Node:
    __slots__ = ("value", "tape", "index", "parents", "vjps")

    def __init__(self, value, tape, parents, vjps):
        self.value = value  # ndarray, or a Node of an enclosing (lower) tape
        self.tape = tape
        self.parents = parents
        self.vjps = vjps


def _record(tape, value, parents, vjps) -> Node:
    node = Node(value, tape, parents, vjps)
    node.index = len(tape.nodes)
    tape.nodes.append(node)
    return node


def _raw(x):
    while isinstance(x, Node):
        x = x.value
    return x


def _shape(x):
    return np.shape(_raw(x))


def _active_tape(args):
    """Innermost open tape that owns any argument, or None."""
    best = None
    for a in args:
        if isinstance(a, Node):
            if a.tape not in _TAPES:
                raise RuntimeError("node used outside its differentiation context")
            if best is None or a.tape.level > best.level:
                best = a.tape
    return best


def _split(args, tape):
    """Unbox arguments one level; return (values, parent slots)."""
    vals = []
    slots = []
    for i, a in enumerate(args):
        if isinstance(a, Node) and a.tape is tape:
            vals.append(a.value)
            slots.append(i)
        else:
            vals.append(a)
    return vals, slots


# --- primitive operators ------------------------------------------------


def add(a, b):
    tape = _active_tape((a, b))
    if tape is None:
        return np.add(a, b)
    (av, bv), slots = _split((a, b), tape)
    out = add(av, bv)
    parents, vjps = [], []
    if 0 in slots:
        parents.append(a)
        vjps.append(lambda g, s=_shape(av): _sum_to(g, s))
    if 1 in slots:
        parents.append(b)
        vjps.append(lambda g, s=_shape(bv): _sum_to(g, s))
    return _record(tape, out, tuple(parents), tuple(vjps))


def neg(a):
    tape = _active_tape((a,))
    if tape is None:
        return np.negative(a)
    (av,), _ = _split((a,), tape)
    return _record(tape, neg(av), (a,), (lambda g: neg(g),))


def sub(a, b):
    return add(a, neg(b))


def mul(a, b):
    tape = _active_tape((a, b))
    if tape is None:
        return np.multiply(a, b)
    (av, bv), slots = _split((a, b), tape)
    out = mul(av, bv)
    parents, vjps = [], []
    if 0 in slots:
        parents.append(a)
        vjps.append(lambda g, o=bv, s=_shape(av): _sum_to(mul(g, o), s))
    if 1 in slots:
        parents.append(b)
        vjps.append(lambda g, o=av, s=_shape(bv): _sum_to(mul(g, o), s))
    return _record(tape, out, tuple(parents), tuple(vjps))


def matmul(a, b):
    tape = _active_tape((a, b))
    if tape is None:
        return np.matmul(a, b)
    (av, bv), slots = _split((a, b), tape)
    out = matmul(av, bv)
    parents, vjps = [], []
    if 0 in slots:
        parents.append(a)
        vjps.append(lambda g, o=bv: matmul(g, transpose(o)))
    if 1 in slots:
        parents.append(b)
        vjps.append(lambda g, o=av: matmul(transpose(o), g))
    return _record(tape, out, tuple(parents), tuple(vjps))


def transpose(a):
    tape = _active_tape((a,))
    if tape is None:
        return np.transpose(a)
    (av,), _ = _split((a,), tape)
    return _record(tape, transpose(av), (a,), (lambda g: transpose(g),))


def reshape(a, shape):
    tape = _active_tape((a,))
    if tape is None:
        return np.reshape(a, shape)
    (av,), _ = _split((a,), tape)
    out = reshape(av, shape)
    return _record(tape, out, (a,), (lambda g, s=_shape(av): reshape(g, s),))


def broadcast_to(a, shape):
    tape = _active_tape((a,))
    if tape is None:
        return np.broadcast_to(a, shape)
    (av,), _ = _split((a,), tape)
    out = broadcast_to(av, shape)
    return _record(tape, out, (a,), (lambda g, s=_shape(av): _sum_to(g, s),))


def tsum(a, axis=None, keepdims=False):
    tape = _active_tape((a,))
    if tape is None:
        return np.asarray(np.sum(a, axis=axis, keepdims=keepdims))
    (av,), _ = _split((a,), tape)
    out = tsum(av, axis=axis, keepdims=keepdims)
    in_shape = _shape(av)

    def backward(g, in_shape=in_shape, axis=axis, keepdims=keepdims):
        return _expand(g, in_shape, axis, keepdims)

    return _record(tape, out, (a,), (backward,))


def tmean(a, axis=None, keepdims=False):
    n = np.size(_raw(a)) if axis is None else _shape(a)[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def relu(a):
    tape = _active_tape((a,))
    if tape is None:
        return np.maximum(a, 0.0)
    (av,), _ = _split((a,), tape)
    mask = (_raw(av) > 0).astype(np.float64)
    return _record(tape, relu(av), (a,), (lambda g, m=mask: mul(g, m),))


def exp(a):
    tape = _active_tape((a,))
    if tape is None:
        return np.exp(a)
    (av,), _ = _split((a,), tape)
    out = exp(av)
    return _record(tape, out, (a,), (lambda g, o=out: mul(g, o),))


def log(a):
    tape = _active_tape((a,))
    if tape is None:
        return np.log(a)
    (av,), _ = _split((a,), tape)
    return _record(tape, log(av), (a,), (lambda g, o=av: mul(g, power(o, -1.0)),))


def power(a, p):
    tape = _active_tape((a,))
    if tape is None:
        return np.power(a, p)
    (av,), _ = _split((a,), tape)
    out = power(av, p)

    def backward(g, o=av, p=p):
        return mul(g, mul(p, power(o, p - 1.0)))

    return _record(tape, out, (a,), (backward,))


# --- compositions -------------------------------------------------------


def dot(a, b):
    return tsum(mul(a, b))


def sqnorm(a):
    return tsum(mul(a, a))


def _sum_to(g, shape):
    """Reduce g by summation down to a broadcast-source shape."""
    g_shape = _shape(g)
    if g_shape == tuple(shape):
        return g
    extra = len(g_shape) - len(shape)
    if extra > 0:
        g = tsum(g, axis=tuple(range(extra)))
        g_shape = _shape(g)
    axes = tuple(i for i, (gs, ts) in enumerate(zip(g_shape, shape)) if ts == 1 and gs != 1)
    if axes:
        g = tsum(g, axis=axes, keepdims=True)
    if _shape(g) != tuple(shape):
        g = reshape(g, shape)
    return g


def _expand(g, in_shape, axis, keepdims):
    """Inverse of a sum reduction: spread g back over the summed axes."""
    if axis is None:
        if len(in_shape) == 0:
            return g
        return broadcast_to(reshape(g, (1,) * len(in_shape)), in_shape)
    axes = axis if isinstance(axis, tuple) else (axis,)
    axes = tuple(a % len(in_shape) for a in axes)
    if not keepdims:
        kept = tuple(1 if i in axes else s for i, s in enumerate(in_shape))
        g = reshape(g, kept)
    return broadcast_to(g, in_shape)


# --- differentiation ----------------------------------------------------


def _backward(tape, out_node, seed):
    grads = {out_node.index: seed}
    leaf_grads = {}
    for node in reversed(tape.nodes[: out_node.index + 1]):
        g = grads.pop(node.index, None)
        if g is None:
            continue
        if not node.parents:
            leaf_grads[node.index] = g
            continue
        for parent, vjp in zip(node.parents, node.vjps):
            contrib = vjp(g)
            if CHECK_NAN and isinstance(contrib, np.ndarray) and not np.all(np.isfinite(contrib)):
                raise GradientError(f"non-finite adjoint at tape node {node.index}")
            prev = grads.get(parent.index)
            grads[parent.index] = contrib if prev is None else add(prev, contrib)
    return leaf_grads


def value_and_grad(f, params):
    """Evaluate ``f(leaves)`` and its gradients with respect to ``params``.

    ``params`` is a list of arrays (or enclosing-tape nodes, when nested);
    ``f`` receives the list of traced leaves and must return a scalar.
    Returns ``(value, grads)`` with grads shaped like the params.
    """
    tape = Tape()
    _TAPES.append(tape)
    try:
        leaves = [tape.leaf(p) for p in params]
        out = f(leaves)
        traced = isinstance(out, Node) and out.tape is tape
        out_value = out.value if traced else out
        if np.size(_raw(out_value)) != 1:
            raise ValueError(
                f"differentiated function must return a scalar, got shape {_shape(out_value)}"
            )
        if traced:
            seed = np.ones(_shape(out_value))
            grads = _backward(tape, out, seed)
        else:
            grads = {}
    finally:
        _TAPES.pop()
    results = []
    for leaf in leaves:
        g = grads.get(leaf.index)
        results.append(np.zeros(_shape(leaf.value)) if g is None else g)
    return out_value, results


def grad(f, params):
    """Gradients of a scalar-valued function at ``params``."""
    return value_and_grad(f, params)[1]


def hvp(f, params, v):
    """Hessian-vector product (∇²f)·v via reverse-over-reverse."""
    if len(v) != len(params):
        raise ValueError("v must have one entry per parameter")
    for p, vi in zip(params, v):
        if _shape(p) != _shape(vi):
            raise ValueError(f"shape mismatch: param {_shape(p)} vs v {_shape(vi)}")

    def grad_dot_v(ps):
        gs = grad(f, ps)
        acc = None
        for gi, vi in zip(gs, v):
            term = dot(gi, vi)
            acc = term if acc is None else add(acc, term)
        return acc

    return grad(grad_dot_v, params)
