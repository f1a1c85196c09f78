"""Minimal dense-tensor engine with reverse-mode differentiation.

Covers exactly the operation set the belief tracker's compute graph needs:
affine maps, sigmoid/ReLU, max-pooling over time, elementwise and scalar
products, dot products, a numerically stable softmax cross-entropy, inverted
dropout, plus the Adam optimizer with entrywise gradient clipping.

Tensors are rank-1 or rank-2 float64 numpy arrays; scalars are represented as
length-1 vectors. Graphs are built define-by-run and discarded after one
backward pass. Parameters are persistent leaf nodes whose gradients accumulate
until `zero_gradients` (or an optimizer step) clears them.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np


class DimensionError(ValueError):
    """Operand shapes do not conform for the requested operation."""


class GraphError(RuntimeError):
    """Backward-pass misuse: non-scalar root, repeated run, or a cycle."""


class NonFiniteGradientError(RuntimeError):
    """A gradient contained NaN/Inf; training must not continue silently."""


def as_tensor(data) -> np.ndarray:
    """Coerce to a float64 array of rank 1 or 2. Python scalars become (1,)."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim > 2:
        raise DimensionError(f"rank-{arr.ndim} tensors are not supported (shape {arr.shape})")
    return arr


class Node:
    """One vertex of the compute graph: a value, its gradient and its recipe."""

    __slots__ = ("value", "grad", "op", "parents", "_backward", "_done")

    def __init__(self, value, op: str = "leaf", parents: tuple = ()):
        self.value = as_tensor(value)
        self.grad = np.zeros_like(self.value)
        self.op = op
        self.parents = parents
        self._backward = None
        self._done = False

    @property
    def shape(self):
        return self.value.shape

    @property
    def is_leaf(self) -> bool:
        return self.op == "leaf"

    def is_scalar(self) -> bool:
        return self.value.size == 1

    def item(self) -> float:
        if not self.is_scalar():
            raise DimensionError(f"item() on non-scalar node of shape {self.shape}")
        return float(self.value.reshape(-1)[0])

    def __repr__(self):
        return f"Node(op={self.op!r}, shape={self.value.shape})"


def wrap(x) -> Node:
    """Pass nodes through; lift raw arrays/scalars into constant leaves."""
    return x if isinstance(x, Node) else Node(x)


def zero_gradients(nodes: Iterable[Node]) -> None:
    for n in nodes:
        n.grad[...] = 0.0


def _check_equal_shapes(op: str, a: Node, b: Node) -> None:
    if a.value.shape != b.value.shape:
        raise DimensionError(f"{op}: shapes {a.value.shape} and {b.value.shape} do not match")


# ---------------------------------------------------------------------------
# forward ops with hand-derived backward closures
# ---------------------------------------------------------------------------

def affine(w, x, b) -> Node:
    """w @ x + b.

    `x` may be a vector (n,) or a matrix (n, t); for matrix input the bias is
    added to every column. Gradients flow to all three operands:
    dW = g x^T, dx = W^T g, db = g (column-summed for matrix input).
    """
    w, x, b = wrap(w), wrap(x), wrap(b)
    wv, xv, bv = w.value, x.value, b.value
    if wv.ndim != 2:
        raise DimensionError(f"affine: weight must be rank 2, got shape {wv.shape}")
    m, n = wv.shape
    if xv.shape[0] != n:
        raise DimensionError(f"affine: weight {wv.shape} does not accept input {xv.shape}")
    if bv.shape != (m,):
        raise DimensionError(f"affine: bias {bv.shape} does not match output dim {m}")
    if xv.ndim == 1:
        out = Node(wv @ xv + bv, op="affine", parents=(w, x, b))
    else:
        out = Node(wv @ xv + bv[:, None], op="affine", parents=(w, x, b))

    def _bw():
        g = out.grad
        if xv.ndim == 1:
            w.grad += np.outer(g, xv)
            x.grad += wv.T @ g
            b.grad += g
        else:
            w.grad += g @ xv.T
            x.grad += wv.T @ g
            b.grad += g.sum(axis=1)

    out._backward = _bw
    return out


def add(*terms) -> Node:
    """Elementwise sum of equally shaped nodes."""
    nodes = tuple(wrap(t) for t in terms)
    if not nodes:
        raise DimensionError("add: needs at least one operand")
    for other in nodes[1:]:
        _check_equal_shapes("add", nodes[0], other)
    total = nodes[0].value.copy()
    for other in nodes[1:]:
        total += other.value
    out = Node(total, op="add", parents=nodes)

    def _bw():
        for n in nodes:
            n.grad += out.grad

    out._backward = _bw
    return out


def _sigmoid_values(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    pos = x >= 0
    z = np.empty_like(x)
    z[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    z[~pos] = ex / (1.0 + ex)
    return z


def sigmoid(x) -> Node:
    x = wrap(x)
    val = _sigmoid_values(x.value)
    out = Node(val, op="sigmoid", parents=(x,))

    def _bw():
        x.grad += out.grad * val * (1.0 - val)

    out._backward = _bw
    return out


def relu(x) -> Node:
    """max(0, x); the subgradient at exactly 0 is taken to be 0."""
    x = wrap(x)
    out = Node(np.maximum(0.0, x.value), op="relu", parents=(x,))

    def _bw():
        x.grad += out.grad * (x.value > 0)

    out._backward = _bw
    return out


def maxpool_over_time(m) -> Node:
    """Per-row maximum over the columns of an (L, T) matrix.

    The gradient is routed only to each row's argmax column; ties break to the
    lowest column index so replay is deterministic.
    """
    m = wrap(m)
    mv = m.value
    if mv.ndim != 2:
        raise DimensionError(f"maxpool_over_time: expected a matrix, got shape {mv.shape}")
    if mv.shape[1] < 1:
        raise DimensionError("maxpool_over_time: empty sequence (zero columns)")
    idx = mv.argmax(axis=1)  # first occurrence wins ties
    out = Node(mv[np.arange(mv.shape[0]), idx], op="maxpool", parents=(m,))

    def _bw():
        m.grad[np.arange(mv.shape[0]), idx] += out.grad

    out._backward = _bw
    return out


def elementwise_mul(a, b) -> Node:
    a, b = wrap(a), wrap(b)
    _check_equal_shapes("elementwise_mul", a, b)
    out = Node(a.value * b.value, op="mul", parents=(a, b))

    def _bw():
        a.grad += out.grad * b.value
        b.grad += out.grad * a.value

    out._backward = _bw
    return out


def scale(a, s) -> Node:
    """Scalar-vector product s * a with gradients to both factors."""
    a, s = wrap(a), wrap(s)
    if not s.is_scalar():
        raise DimensionError(f"scale: scale factor must be scalar, got shape {s.shape}")
    sval = s.value.reshape(-1)[0]
    out = Node(a.value * sval, op="scale", parents=(a, s))

    def _bw():
        a.grad += out.grad * sval
        s.grad += np.array([np.sum(out.grad * a.value)]).reshape(s.value.shape)

    out._backward = _bw
    return out


def dot(a, b) -> Node:
    """Inner product of two equal-length vectors; returns a scalar node."""
    a, b = wrap(a), wrap(b)
    if a.value.ndim != 1 or b.value.ndim != 1:
        raise DimensionError("dot: operands must be vectors")
    _check_equal_shapes("dot", a, b)
    out = Node(np.array([a.value @ b.value]), op="dot", parents=(a, b))

    def _bw():
        g = out.grad[0]
        a.grad += g * b.value
        b.grad += g * a.value

    out._backward = _bw
    return out


def vec_sum(x) -> Node:
    """Sum of all entries; returns a scalar node."""
    x = wrap(x)
    out = Node(np.array([x.value.sum()]), op="sum", parents=(x,))

    def _bw():
        x.grad += out.grad[0]

    out._backward = _bw
    return out


def softmax_xent(logits, label: int) -> Node:
    """Cross-entropy of softmax(logits) against an integer class label.

    Uses the log-sum-exp stabilization; the backward pass is softmax - onehot.
    """
    logits = wrap(logits)
    z = logits.value
    if z.ndim != 1 or z.shape[0] < 2:
        raise DimensionError(f"softmax_xent: logits must be a vector of >= 2 classes, got {z.shape}")
    if not 0 <= label < z.shape[0]:
        raise ValueError(f"softmax_xent: label {label} outside class range 0..{z.shape[0] - 1}")
    zmax = z.max()
    lse = zmax + np.log(np.exp(z - zmax).sum())
    probs = np.exp(z - lse)
    out = Node(np.array([lse - z[label]]), op="xent", parents=(logits,))

    def _bw():
        delta = probs.copy()
        delta[label] -= 1.0
        logits.grad += out.grad[0] * delta

    out._backward = _bw
    return out


def dropout(x, rate: float, rng: np.random.Generator) -> Node:
    """Inverted dropout: zero entries with probability `rate`, rescale the rest.

    Evaluation-time code simply skips this op; no rescaling is needed there.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    x = wrap(x)
    if rate == 0.0:
        return x
    mask = (rng.random(x.value.shape) >= rate) / (1.0 - rate)
    out = Node(x.value * mask, op="dropout", parents=(x,))

    def _bw():
        x.grad += out.grad * mask

    out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# reverse-mode traversal
# ---------------------------------------------------------------------------

def backward(root: Node) -> dict:
    """Accumulate d(root)/d(node) into .grad for everything reachable from root.

    The root must be scalar. Each graph may be traversed once; a second call
    on the same root raises. Returns {leaf node: gradient} for convenience.
    """
    if not isinstance(root, Node):
        raise GraphError("backward: root must be a Node")
    if not root.is_scalar():
        raise DimensionError(f"backward: root must be scalar, got shape {root.shape}")
    if root._done:
        raise GraphError("backward already ran on this graph; rebuild it (or zero gradients) first")

    # iterative post-order DFS; children precede parents in `order`
    order: list[Node] = []
    visited = {id(root)}
    on_path = {id(root)}
    stack: list[tuple[Node, Iterable[Node]]] = [(root, iter(root.parents))]
    while stack:
        node, it = stack[-1]
        advanced = False
        for child in it:
            if id(child) in on_path:
                raise GraphError("cycle detected in compute graph")
            if id(child) not in visited:
                visited.add(id(child))
                on_path.add(id(child))
                stack.append((child, iter(child.parents)))
                advanced = True
                break
        if not advanced:
            order.append(node)
            on_path.discard(id(node))
            stack.pop()

    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        if node._backward is not None:
            node._backward()
    root._done = True
    return {n: n.grad for n in order if n.is_leaf}


# ---------------------------------------------------------------------------
# Adam with gradient clipping
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """First/second moment accumulators keyed like the parameter dict."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState,
              lr: float = 0.001, clip: tuple | None = (-2.0, 2.0)) -> None:
    """One bias-corrected Adam update, applied in place to `params`.

    Every gradient entry is clamped to [clip[0], clip[1]] before the moment
    updates. Non-finite gradients abort with a diagnostic naming the tensor.
    """
    if clip is not None and not clip[0] < clip[1]:
        raise ValueError(f"invalid clip interval {clip}")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(
                f"non-finite gradient for '{name}' at step {state.t + 1}: "
                f"min={np.nanmin(g)}, max={np.nanmax(g)}")
        if g.shape != params[name].shape:
            raise DimensionError(f"adam_step: gradient {g.shape} vs parameter "
                                 f"{params[name].shape} for '{name}'")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if clip is not None:
            g = np.clip(g, clip[0], clip[1])
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


# ---------------------------------------------------------------------------
# finite-difference checking (forward evaluations only; independent of the
# backward code it is used to verify)
# ---------------------------------------------------------------------------

def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max over entries of |a - n| / max(1, |a|, |n|)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def numeric_gradient(build_loss: Callable[[], Node], param: Node,
                     h: float = 1e-5, indices=None) -> np.ndarray:
    """Central finite differences of build_loss() w.r.t. selected param entries.

    `build_loss` must rebuild the forward graph from current parameter values
    and be free of fresh randomness.
    """
    flat = param.value.reshape(-1)
    indices = list(range(flat.size)) if indices is None else list(indices)
    grads = np.zeros(len(indices))
    for k, i in enumerate(indices):
        orig = flat[i]
        flat[i] = orig + h
        up = build_loss().item()
        flat[i] = orig - h
        down = build_loss().item()
        flat[i] = orig
        grads[k] = (up - down) / (2.0 * h)
    return grads


def finite_difference_check(build_loss: Callable[[], Node], params: dict,
                            h: float = 1e-5, max_entries_per_param: int | None = None,
                            rng: np.random.Generator | None = None) -> float:
    """Compare analytic gradients against central differences.

    Runs one backward pass for the analytic side, then perturbs each parameter
    entrywise (optionally a random sample of entries). Returns the max
    relative error over all checked entries.
    """
    zero_gradients(params.values())
    backward(build_loss())
    analytic = {name: p.grad.copy() for name, p in params.items()}
    worst = 0.0
    for name, p in params.items():
        size = p.value.size
        if max_entries_per_param is not None and size > max_entries_per_param:
            if rng is None:
                rng = np.random.default_rng(0)
            idx = sorted(rng.choice(size, size=max_entries_per_param, replace=False).tolist())
        else:
            idx = list(range(size))
        numeric = numeric_gradient(build_loss, p, h=h, indices=idx)
        worst = max(worst, relative_error(analytic[name].reshape(-1)[idx], numeric))
    zero_gradients(params.values())
    return worst


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary labels; independent of PYTHONHASHSEED."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1
