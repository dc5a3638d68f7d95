"""Reverse-mode automatic differentiation over dense float64 numpy arrays.

A forward pass builds a tape of ``Tensor`` nodes; ``backward`` walks the
tape in reverse topological order exactly once and deposits gradients into
the ``Parameter`` leaves involved.  Everything is float64 and all
reductions use numpy's deterministic accumulation, so identical inputs
produce bit-identical results.

Sequence ops use a time-major block layout: a batch of B sequences padded
to T steps is stored as a (T*B, F) matrix whose rows [t*B:(t+1)*B] hold
step t.  Recurrences (``rnn_scan``) and convolutions over time
(``conv1d_time``) are single tape nodes with hand-written backward passes,
which keeps the tape short for long sequences.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError, InputError, ShapeError, StateError

PROB_FLOOR = 1e-12  # clamp applied before any log of a probability

_grad_enabled = True
_finite_checks = True


def set_finite_checks(enabled: bool) -> None:
    """Toggle NaN/Inf assertions after every forward op and gradient deposit."""
    global _finite_checks
    _finite_checks = bool(enabled)


class no_grad:
    """Context manager that disables tape recording."""

    def __enter__(self):
        global _grad_enabled
        self._saved = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._saved
        return False


def _as_f64(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    return a


def _check_finite(a: np.ndarray, where: str) -> None:
    if _finite_checks and not np.all(np.isfinite(a)):
        raise FloatingPointError(f"non-finite values produced by {where}")


class Parameter:
    """A named trainable array with gradient and Adam moment buffers."""

    __slots__ = ("name", "value", "grad", "m", "v")

    def __init__(self, name: str, value):
        self.name = name
        self.value = _as_f64(value).copy()
        self.grad = np.zeros_like(self.value)
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


class Tensor:
    """One node of the tape: forward value plus links to its inputs."""

    __slots__ = ("data", "parents", "_bw", "param", "op")

    def __init__(self, data, parents=(), bw=None, param=None, op=""):
        self.data = _as_f64(data)
        self.parents = parents
        self._bw = bw
        self.param = param
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.data.shape})"

    # Small algebra for tests and loss composition.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -_as_f64(other))


def tensor(data) -> Tensor:
    """Wrap an array as a constant (gradient-free) tensor."""
    return Tensor(data, op="const")


def leaf(param: Parameter) -> Tensor:
    """Wrap a Parameter as a tape leaf; backward deposits into param.grad."""
    return Tensor(param.value, param=param, op="param")


def _node(data, parents, bw, op) -> Tensor:
    _check_finite(np.asarray(data, dtype=np.float64), op)
    if not _grad_enabled:
        return Tensor(data, op=op)
    return Tensor(data, parents=parents, bw=bw, param=None, op=op)


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else tensor(x)


# ---------------------------------------------------------------------------
# elementwise and linear algebra ops


def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out = a.data + b.data

    def bw(g):
        return (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape))

    return _node(out, (a, b), bw, "add")


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out = a.data * b.data

    def bw(g):
        return (_unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape))

    return _node(out, (a, b), bw, "mul")


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum-reduce a broadcast gradient back to the operand's shape."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def matmul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul: a has shape {a.data.shape}, b has shape {b.data.shape}"
        )
    out = a.data @ b.data

    def bw(g):
        return (g @ b.data.T, a.data.T @ g)

    return _node(out, (a, b), bw, "matmul")


def linear(x, W, b) -> Tensor:
    """x @ W + b with the bias broadcast across rows."""
    x, W, b = _coerce(x), _coerce(W), _coerce(b)
    if x.data.ndim != 2 or W.data.ndim != 2:
        raise ShapeError(f"linear: x {x.data.shape} and W {W.data.shape} must be matrices")
    if x.data.shape[1] != W.data.shape[0] or W.data.shape[1] != b.data.shape[-1]:
        raise ShapeError(
            f"linear: x {x.data.shape} @ W {W.data.shape} + b {b.data.shape} do not conform"
        )
    out = x.data @ W.data + b.data

    def bw(g):
        return (g @ W.data.T, x.data.T @ g, g.sum(axis=0))

    return _node(out, (x, W, b), bw, "linear")


def relu(x) -> Tensor:
    x = _coerce(x)
    mask = x.data > 0.0
    out = np.where(mask, x.data, 0.0)

    def bw(g):
        return (g * mask,)

    return _node(out, (x,), bw, "relu")


def tanh(x) -> Tensor:
    x = _coerce(x)
    out = np.tanh(x.data)

    def bw(g):
        return (g * (1.0 - out * out),)

    return _node(out, (x,), bw, "tanh")


def sum_all(x) -> Tensor:
    x = _coerce(x)
    out = x.data.sum()

    def bw(g):
        return (np.broadcast_to(g, x.data.shape).copy(),)

    return _node(out, (x,), bw, "sum")


def mean_all(x) -> Tensor:
    x = _coerce(x)
    n = x.data.size
    out = x.data.sum() / n

    def bw(g):
        return (np.broadcast_to(g / n, x.data.shape).copy(),)

    return _node(out, (x,), bw, "mean")


def stop_gradient(x) -> Tensor:
    x = _coerce(x)
    return Tensor(x.data, op="stopgrad")


# ---------------------------------------------------------------------------
# shape plumbing for the time-major block layout


def concat_cols(parts) -> Tensor:
    parts = [_coerce(p) for p in parts]
    widths = [p.data.shape[1] for p in parts]
    out = np.concatenate([p.data for p in parts], axis=1)
    offsets = np.cumsum([0] + widths)

    def bw(g):
        return tuple(g[:, offsets[i]:offsets[i + 1]] for i in range(len(parts)))

    return _node(out, tuple(parts), bw, "concat_cols")


def slice_rows(x, start: int, stop: int) -> Tensor:
    x = _coerce(x)
    out = x.data[start:stop]

    def bw(g):
        gx = np.zeros_like(x.data)
        gx[start:stop] = g
        return (gx,)

    return _node(out, (x,), bw, "slice_rows")


def tile_rows(x, reps: int) -> Tensor:
    """Repeat a (B, F) block ``reps`` times to (reps*B, F)."""
    x = _coerce(x)
    B, F = x.data.shape
    out = np.tile(x.data, (reps, 1))

    def bw(g):
        return (g.reshape(reps, B, F).sum(axis=0),)

    return _node(out, (x,), bw, "tile_rows")


def shift_rows_down(x, block: int) -> Tensor:
    """Shift rows down by ``block`` (zeros on top): step t sees step t-1."""
    x = _coerce(x)
    out = np.zeros_like(x.data)
    out[block:] = x.data[:-block]

    def bw(g):
        gx = np.zeros_like(x.data)
        gx[:-block] = g[block:]
        return (gx,)

    return _node(out, (x,), bw, "shift_rows_down")


def embedding_lookup(table, ids) -> Tensor:
    table = _coerce(table)
    ids = np.asarray(ids, dtype=np.int64)
    out = table.data[ids]

    def bw(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return _node(out, (table,), bw, "embedding")


def dropout(x, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; draws its mask from ``rng`` at call time."""
    x = _coerce(x)
    if not 0.0 <= rate < 1.0:
        raise DomainError(f"dropout rate must be in [0, 1), got {rate}")
    keep = 1.0 - rate
    mask = (rng.random(x.data.shape) < keep) / keep
    out = x.data * mask

    def bw(g):
        return (g * mask,)

    return _node(out, (x,), bw, "dropout")


# ---------------------------------------------------------------------------
# fused sequence ops


def conv1d_time(x, W, b, block: int, causal: bool = False) -> Tensor:
    """Kernel-3 convolution over the time axis of a (T*block, C) layout.

    Centered taps are (t-1, t, t+1); causal taps are (t-2, t-1, t) so the
    output at step t never depends on future steps.  Steps beyond either
    end are zero, which matches per-sequence zero padding because padded
    sequences are themselves zero-filled.
    """
    x, W, b = _coerce(x), _coerce(W), _coerce(b)
    if W.data.ndim != 3 or W.data.shape[0] != 3 or W.data.shape[1] != x.data.shape[1]:
        raise ShapeError(f"conv1d_time: x {x.data.shape} vs W {W.data.shape}")
    offsets = (2, 1, 0) if causal else (1, 0, -1)

    def shifted(a, k):  # rows of step t-k (k may be negative)
        if k == 0:
            return a
        s = np.zeros_like(a)
        n = k * block
        if n > 0:
            s[n:] = a[:-n]
        else:
            s[:n] = a[-n:]
        return s

    out = b.data + sum(shifted(x.data, offsets[i]) @ W.data[i] for i in range(3))

    def bw(g):
        gx = np.zeros_like(x.data)
        gW = np.empty_like(W.data)
        for i in range(3):
            gx += shifted(g @ W.data[i].T, -offsets[i])
            gW[i] = shifted(x.data, offsets[i]).T @ g
        return (gx, gW, g.sum(axis=0))

    return _node(out, (x, W, b), bw, "conv1d_time")


def rnn_scan(x, Wx, Wh, b, block: int, mask=None, reverse: bool = False) -> Tensor:
    """Unrolled tanh recurrence over a (T*block, F) layout, one tape node.

    state_t = state_prev + m_t * (tanh(x_t Wx + state_prev Wh + b) - state_prev)

    ``mask`` is an optional (T*block, 1) 0/1 array; masked steps carry the
    previous state through unchanged, so zero-padded steps do not disturb
    the recurrence.  ``reverse`` runs the scan from the last step backward.
    """
    x, Wx, Wh, b = _coerce(x), _coerce(Wx), _coerce(Wh), _coerce(b)
    TB, F = x.data.shape
    if TB % block:
        raise ShapeError(f"rnn_scan: {TB} rows not divisible by block {block}")
    T = TB // block
    H = Wh.data.shape[0]
    m = None if mask is None else np.asarray(mask, dtype=np.float64)

    xd, Wxd, Whd, bd = x.data, Wx.data, Wh.data, b.data
    states = np.empty((TB, H))
    pre = np.empty((TB, H))  # tanh outputs, kept for backward
    h = np.zeros((block, H))
    order = range(T - 1, -1, -1) if reverse else range(T)
    for t in order:
        lo = t * block
        rows = slice(lo, lo + block)
        hn = np.tanh(xd[rows] @ Wxd + h @ Whd + bd)
        pre[rows] = hn
        if m is None:
            h = hn
        else:
            h = h + m[rows] * (hn - h)
        states[rows] = h

    def bw(g):
        gx = np.empty((TB, F))
        gWx = np.zeros_like(Wxd)
        gWh = np.zeros_like(Whd)
        gb = np.zeros(H)
        carry = np.zeros((block, H))
        zero = np.zeros((block, H))
        for t in (range(T) if reverse else range(T - 1, -1, -1)):
            lo = t * block
            rows = slice(lo, lo + block)
            if reverse:
                prev_rows = slice(lo + block, lo + 2 * block)
                h_prev = states[prev_rows] if t + 1 < T else zero
            else:
                h_prev = states[lo - block:lo] if t > 0 else zero
            dh = g[rows] + carry
            dhn = dh if m is None else dh * m[rows]
            da = dhn * (1.0 - pre[rows] ** 2)
            gWx += xd[rows].T @ da
            gWh += h_prev.T @ da
            gb += da.sum(axis=0)
            gx[rows] = da @ Wxd.T
            carry = da @ Whd.T
            if m is not None:
                carry = carry + dh * (1.0 - m[rows])
        return (gx, gWx, gWh, gb)

    return _node(states, (x, Wx, Wh, b), bw, "rnn_scan")


# ---------------------------------------------------------------------------
# probability ops and losses


def _softmax_fwd(z: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = z - z.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_rows(z) -> Tensor:
    z = _coerce(z)
    p = _softmax_fwd(z.data, axis=-1)

    def bw(g):
        dot = (g * p).sum(axis=-1, keepdims=True)
        return (p * (g - dot),)

    return _node(p, (z,), bw, "softmax_rows")


def _frame_weights(n_rows: int, weights) -> np.ndarray:
    if weights is None:
        return np.ones((n_rows, 1))
    w = np.asarray(weights, dtype=np.float64).reshape(n_rows, 1)
    return w


def mse_loss(x, target, weights=None) -> Tensor:
    """Per-frame-weighted mean squared error, averaged over frames and dims."""
    x = _coerce(x)
    t = np.asarray(target, dtype=np.float64)
    if x.data.shape != t.shape:
        raise InputError(f"mse_loss: prediction {x.data.shape} vs target {t.shape}")
    w = _frame_weights(x.data.shape[0], weights)
    denom = w.sum() * x.data.shape[1]
    diff = x.data - t
    out = float((w * diff * diff).sum() / denom)

    def bw(g):
        return (g * 2.0 * w * diff / denom,)

    return _node(out, (x,), bw, "mse")


def uniform_distance_loss(p, weights=None, validate: bool = True) -> Tensor:
    """Mean over frames of the squared L2 distance to the uniform distribution."""
    p = _coerce(p)
    n = p.data.shape[-1]
    if validate:
        sums = p.data.sum(axis=-1)
        if np.any(np.abs(sums - 1.0) > 1e-6):
            raise InputError("uniform_distance_loss: rows must sum to 1 within 1e-6")
    w = _frame_weights(p.data.shape[0], weights)
    d = p.data - 1.0 / n
    denom = w.sum()
    out = float((w * d * d).sum() / denom)

    def bw(g):
        return (g * 2.0 * w * d / denom,)

    return _node(out, (p,), bw, "uniform_distance")


def nll_rows(p, labels, weights=None) -> Tensor:
    """Weighted mean of -log p[row, label], with probabilities clamped at 1e-12."""
    p = _coerce(p)
    y = np.asarray(labels, dtype=np.int64)
    n_rows, n_cls = p.data.shape
    if y.shape != (n_rows,):
        raise InputError(f"nll_rows: labels shape {y.shape} does not match {n_rows} rows")
    if np.any(y < 0) or np.any(y >= n_cls):
        raise InputError(f"nll_rows: label out of range [0, {n_cls})")
    w = _frame_weights(n_rows, weights)[:, 0]
    picked = p.data[np.arange(n_rows), y]
    clamped = np.maximum(picked, PROB_FLOOR)
    denom = w.sum()
    out = float(-(w * np.log(clamped)).sum() / denom)

    def bw(g):
        gp = np.zeros_like(p.data)
        live = picked > PROB_FLOOR  # no gradient through the clamp
        gp[np.arange(n_rows), y] = np.where(live, -g * w / (clamped * denom), 0.0)
        return (gp,)

    return _node(out, (p,), bw, "nll_rows")


# ---------------------------------------------------------------------------
# backward engine


def backward(loss: Tensor, seed: float = 1.0, param_filter=None) -> None:
    """Accumulate d(loss)/d(param) into every reachable Parameter's .grad.

    ``seed`` scales the whole gradient (used for weighted loss terms).
    ``param_filter`` restricts deposits to the given set of parameter names.
    """
    if not isinstance(loss, Tensor):
        raise StateError("backward requires a Tensor produced by a recorded forward pass")
    if loss.data.size != 1:
        raise ShapeError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    if not loss.parents and loss.param is None:
        raise StateError("backward called without a recorded tape")

    topo: list[Tensor] = []
    seen = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    grads: dict[int, np.ndarray] = {id(loss): np.full(loss.data.shape, float(seed))}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.param is not None:
            if param_filter is None or node.param.name in param_filter:
                _check_finite(g, f"grad[{node.param.name}]")
                node.param.grad += g
        if node._bw is None:
            continue
        parent_grads = node._bw(g)
        for parent, pg in zip(node.parents, parent_grads):
            if pg is None:
                continue
            acc = grads.get(id(parent))
            if acc is None:
                grads[id(parent)] = pg.copy() if pg.base is not None else pg
            else:
                acc += pg


# ---------------------------------------------------------------------------
# array-level reference surface (shared kernels, no tape)


def linear_forward(x, W, b) -> np.ndarray:
    """Affine map out[r, c] = sum_i x[r, i] W[i, c] + b[c] on plain arrays."""
    x, W, b = _as_f64(x), _as_f64(W), _as_f64(b)
    if x.ndim != 2 or W.ndim != 2:
        raise ShapeError(f"linear_forward: x {x.shape} and W {W.shape} must be matrices")
    if x.shape[1] != W.shape[0]:
        raise ShapeError(f"linear_forward: x {x.shape} does not conform with W {W.shape}")
    if b.shape != (W.shape[1],):
        raise ShapeError(f"linear_forward: b {b.shape} does not conform with W {W.shape}")
    return x @ W + b


def softmax(z) -> np.ndarray:
    """Numerically stable softmax of a vector (max-subtracted)."""
    z = _as_f64(z)
    if z.size == 0:
        raise DomainError("softmax of an empty vector is undefined")
    if not np.all(np.isfinite(z)):
        raise DomainError("softmax requires finite inputs")
    return _softmax_fwd(z.reshape(-1))


def cross_entropy(p, onehot) -> float:
    """-log p[argmax onehot], clamping p below at 1e-12 before the log."""
    p = _as_f64(p).reshape(-1)
    l = _as_f64(onehot).reshape(-1)
    if p.shape != l.shape:
        raise ShapeError(f"cross_entropy: p {p.shape} vs label {l.shape}")
    ones = np.isclose(l, 1.0)
    zeros = np.isclose(l, 0.0)
    if ones.sum() != 1 or not np.all(ones | zeros):
        raise DomainError("cross_entropy label must be one-hot")
    return float(-np.log(max(p[np.argmax(l)], PROB_FLOOR)))
