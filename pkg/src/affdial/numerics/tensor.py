"""Reverse-mode autodiff over numpy float64 arrays.

A ``Tensor`` wraps an ndarray and remembers, when gradients may flow,
which tensors produced it and a closure that pushes an incoming output
gradient back to them.  ``backward`` topologically sorts that implicit
graph from the loss and runs the closures in reverse order, visiting
each node exactly once and accumulating (never overwriting) parent
gradients, so shared subexpressions are handled correctly.

All data is float64.  Ops validate shapes eagerly and raise
``ShapeError`` with both offending shapes in the message.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


def _as_array(data) -> np.ndarray:
    return np.asarray(data, dtype=np.float64)


class Tensor:
    """Node in the autodiff graph: float64 data plus optional tape entry.

    ``requires_grad`` marks leaf parameters.  Interior nodes carry a
    ``_backward`` closure whenever any ancestor requires grad; otherwise
    they are plain constants and the tape skips them.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # Sugar only; every overload delegates to a module-level op.
    def __add__(self, other):
        return add(self, _promote(other))

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        return add(self, scale(_promote(other), -1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return slice_(self, key)


def _promote(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(_as_array(x))


def _tracked(t: Tensor) -> bool:
    return t.requires_grad or t._backward is not None


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor(data)
    if any(_tracked(p) for p in parents):
        out._parents = parents
        out._backward = backward_fn
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    """Accumulate an output gradient into ``t.grad``.

    Copies on first write: the incoming array may alias a child's .grad
    (identity-like backward rules pass it through untouched), and later
    in-place += from a second consumer must not corrupt it.
    """
    if not _tracked(t):
        return
    if g.shape != t.data.shape:
        g = g.reshape(t.data.shape)
    if t.grad is None:
        t.grad = np.array(g)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape``, undoing numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# graph traversal


class Graph:
    """Topological ordering of the tensors reachable from a root."""

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def trace(cls, root: Tensor) -> "Graph":
        # Iterative post-order: parents precede children in `order`.
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
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        return cls(order)

    def __len__(self) -> int:
        return len(self.nodes)


def backward(loss: Tensor) -> None:
    """Run reverse-mode accumulation from a scalar loss.

    Gradients accumulate into ``.grad`` without zeroing first; callers
    own the zero/step cycle.  Raises ShapeError for a non-scalar root.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    graph = Graph.trace(loss)
    if loss.grad is None:
        loss.grad = np.ones_like(loss.data)
    for node in reversed(graph.nodes):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def zero_grads(params) -> None:
    """Reset .grad to None for every tensor in an iterable or dict."""
    if hasattr(params, "values"):
        params = params.values()
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# arithmetic ops


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _promote(a), _promote(b)
    try:
        data = a.data + b.data
    except ValueError as exc:
        raise ShapeError(f"add: cannot broadcast {a.shape} with {b.shape}") from exc

    def _bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _node(data, (a, b), _bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _promote(a), _promote(b)
    try:
        data = a.data * b.data
    except ValueError as exc:
        raise ShapeError(f"mul: cannot broadcast {a.shape} with {b.shape}") from exc

    def _bwd(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(data, (a, b), _bwd)


def scale(x: Tensor, s: float) -> Tensor:
    x = _promote(x)
    s = float(s)

    def _bwd(g):
        _accum(x, g * s)

    return _node(x.data * s, (x,), _bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product; leading dims broadcast, both operands >= 2-D."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    data = np.matmul(a.data, b.data)

    def _bwd(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        _accum(a, _unbroadcast(ga, a.data.shape))
        _accum(b, _unbroadcast(gb, b.data.shape))

    return _node(data, (a, b), _bwd)


def concat(tensors, axis: int = 0) -> Tensor:
    ts = [_promote(t) for t in tensors]
    if not ts:
        raise ShapeError("concat of zero tensors")
    data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.data.shape[axis] for t in ts]

    def _bwd(g):
        start = 0
        for t, n in zip(ts, sizes):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(start, start + n)
            _accum(t, g[tuple(idx)])
            start += n

    return _node(data, tuple(ts), _bwd)


def slice_(x: Tensor, key) -> Tensor:
    data = x.data[key]

    def _bwd(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, key, g)
        _accum(x, gx)

    return _node(np.array(data), (x,), _bwd)


def reshape(x: Tensor, shape) -> Tensor:
    data = x.data.reshape(shape)

    def _bwd(g):
        _accum(x, g.reshape(x.data.shape))

    return _node(data, (x,), _bwd)


def swapaxes(x: Tensor, a: int, b: int) -> Tensor:
    data = np.swapaxes(x.data, a, b)

    def _bwd(g):
        _accum(x, np.swapaxes(g, a, b))

    return _node(data, (x,), _bwd)


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def _bwd(g):
        if axis is None:
            _accum(x, np.broadcast_to(g, x.data.shape))
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accum(x, np.broadcast_to(g, x.data.shape))

    return _node(data, (x,), _bwd)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    s = sum_(x, axis=axis, keepdims=keepdims)
    n = x.data.size // max(s.data.size, 1)
    return scale(s, 1.0 / n)


# ---------------------------------------------------------------------------
# neural-net ops


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of ``table`` by an integer id array of any shape."""
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise ShapeError(f"embedding ids must be integers, got dtype {ids.dtype}")
    if table.ndim != 2:
        raise ShapeError(f"embedding table must be 2-D, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(
            f"embedding id out of range [0, {table.shape[0]}): "
            f"min={ids.min()} max={ids.max()}"
        )
    data = table.data[ids]

    def _bwd(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        _accum(table, gt)

    return _node(data, (table,), _bwd)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Row-stable softmax; -inf inputs yield exactly zero probability."""
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def _bwd(g):
        inner = (g * y).sum(axis=axis, keepdims=True)
        _accum(x, y * (g - inner))

    return _node(y, (x,), _bwd)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    m = x.data.max(axis=axis, keepdims=True)
    shifted = x.data - m
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse

    def _bwd(g):
        p = np.exp(out)
        _accum(x, g - p * g.sum(axis=axis, keepdims=True))

    return _node(out, (x,), _bwd)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean, unit variance, then affine.

    Population variance (no Bessel correction).
    """
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(
            f"layer_norm affine shapes {gain.shape}/{bias.shape} "
            f"do not match feature dim {d}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    var = ((x.data - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    y = xhat * gain.data + bias.data

    def _bwd(g):
        dxhat = g * gain.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        _accum(x, inv * (dxhat - m1 - xhat * m2))
        reduce_axes = tuple(range(g.ndim - 1))
        _accum(gain, (g * xhat).sum(axis=reduce_axes))
        _accum(bias, g.sum(axis=reduce_axes))

    return _node(y, (x, gain, bias), _bwd)


_GELU_C = np.sqrt(2.0 / np.pi)
_GELU_A = 0.044715


def gelu(x: Tensor) -> Tensor:
    """Gaussian error linear unit, tanh approximation."""
    u = _GELU_C * (x.data + _GELU_A * x.data**3)
    t = np.tanh(u)
    y = 0.5 * x.data * (1.0 + t)

    def _bwd(g):
        du = _GELU_C * (1.0 + 3.0 * _GELU_A * x.data**2)
        dy = 0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t**2) * du
        _accum(x, g * dy)

    return _node(y, (x,), _bwd)


def dropout(x: Tensor, p: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; a pure identity node when inactive.

    Inactive means train=False or p == 0, and the identity path performs
    no arithmetic at all so outputs stay bit-identical to the input.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    if not train or p == 0.0:

        def _bwd_id(g):
            _accum(x, g)

        return _node(x.data, (x,), _bwd_id)
    if rng is None:
        raise ValueError("active dropout requires an rng")
    keep = (rng.random(x.data.shape) >= p).astype(np.float64) / (1.0 - p)

    def _bwd(g):
        _accum(x, g * keep)

    return _node(x.data * keep, (x,), _bwd)


def causal_mask_fill(scores: Tensor) -> Tensor:
    """Set strictly-upper-triangular attention scores to -inf.

    Operates on the trailing (T, T) axes.  The fill is exact: softmax of
    -inf is exactly zero, so position t cannot attend to any position
    after t, and the backward pass passes zero gradient through masked
    cells.
    """
    t = scores.shape[-1]
    if scores.ndim < 2 or scores.shape[-2] != t:
        raise ShapeError(f"causal mask needs trailing square axes, got {scores.shape}")
    future = np.triu(np.ones((t, t), dtype=bool), k=1)
    data = np.where(future, -np.inf, scores.data)

    def _bwd(g):
        _accum(scores, np.where(future, 0.0, g))

    return _node(data, (scores,), _bwd)


def cross_entropy(logits: Tensor, targets: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean negative log-likelihood over positions where mask is true.

    logits: (..., V); targets and mask shaped like the leading dims.
    Raises ShapeError when the mask selects nothing (the mean would be
    0/0) or when shapes disagree.
    """
    targets = np.asarray(targets)
    mask = np.asarray(mask)
    lead = logits.shape[:-1]
    if targets.shape != lead or mask.shape != lead:
        raise ShapeError(
            f"cross_entropy shapes disagree: logits {logits.shape}, "
            f"targets {targets.shape}, mask {mask.shape}"
        )
    v = logits.shape[-1]
    flat = logits.data.reshape(-1, v)
    tgt = targets.reshape(-1).astype(np.int64)
    m = mask.reshape(-1).astype(np.float64)
    n = m.sum()
    if n == 0:
        raise ShapeError("cross_entropy mask selects zero positions")
    if tgt.size and (tgt.min() < 0 or tgt.max() >= v):
        raise ShapeError(f"cross_entropy target out of range [0, {v})")
    mx = flat.max(axis=-1, keepdims=True)
    shifted = flat - mx
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - lse
    rows = np.arange(flat.shape[0])
    nll = -logp[rows, tgt]
    loss = (nll * m).sum() / n

    def _bwd(g):
        gs = float(g)
        p = np.exp(logp)
        p[rows, tgt] -= 1.0
        p *= (m / n)[:, None] * gs
        _accum(logits, p.reshape(logits.data.shape))

    return _node(np.float64(loss), (logits,), _bwd)
