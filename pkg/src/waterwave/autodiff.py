"""Minimal reverse-mode automatic differentiation over numpy arrays.

The training loss touches a small, fixed set of operations (table gathers,
affine layers, ReLU/sigmoid, bilinear warps, lifting steps, absolute values,
means), so the tape records vectorized array ops rather than scalars.
Gradients follow the dtype of the forward pass: float32 parameters train in
float32, while finite-difference checks promote everything to float64.

Most helpers here accept either a Tensor or a plain ndarray and return the
matching kind, which lets the wavelet/warp code be written once and reused
for both live (differentiated) and cached (constant) inputs.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np
from scipy.special import expit

from .errors import NumericalError

# Active sink for piecewise-linearity signatures (see record_kinks below).
_KINK_SINK: list | None = None


@contextmanager
def record_kinks(sink: list):
    """Collect kink signatures (ReLU/abs signs, warp cells, masks) during a forward pass.

    A finite-difference probe is only trustworthy if the perturbed evaluations
    stay on the same linear piece of every piecewise op; comparing the sink
    contents across evaluations detects crossings so the probe can be resampled.
    """
    global _KINK_SINK
    prev = _KINK_SINK
    _KINK_SINK = sink
    try:
        yield sink
    finally:
        _KINK_SINK = prev


def note_kinks(arr: np.ndarray) -> None:
    """Append an array to the active kink signature, if any (cheap no-op otherwise)."""
    if _KINK_SINK is not None:
        _KINK_SINK.append(np.asarray(arr).copy())


def same_kinks(a: list, b: list) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


class Tensor:
    """A node in the recorded computation graph."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_vjp", "_grad_borrowed")

    def __init__(self, value, requires_grad=False, parents=(), vjp=None):
        self.value = np.asarray(value)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._vjp = vjp
        self._grad_borrowed = False

    @property
    def shape(self):
        return self.value.shape

    # -- operators ---------------------------------------------------------

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

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / other)

    def __getitem__(self, idx):
        value = self.value[idx]

        def vjp(g):
            out = np.zeros(self.value.shape, dtype=g.dtype)
            out[idx] = g
            return (out,)

        return Tensor(value, parents=(self,), vjp=vjp)

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, grad={self.requires_grad})"


def constant(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _aligned(a, b):
    """Wrap an operand pair as Tensors; python scalars adopt the array's dtype.

    Without this, a bare float would enter the graph as a 0-d float64 array
    and silently promote every float32 computation downstream.
    """
    if isinstance(a, Tensor) and isinstance(b, (bool, int, float)):
        b = Tensor(np.asarray(b, dtype=a.value.dtype))
    elif isinstance(b, Tensor) and isinstance(a, (bool, int, float)):
        a = Tensor(np.asarray(a, dtype=b.value.dtype))
    return constant(a), constant(b)


def is_tensor(x) -> bool:
    return isinstance(x, Tensor)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient g down to `shape` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b):
    if not (isinstance(a, Tensor) or isinstance(b, Tensor)):
        return np.add(a, b)
    a, b = _aligned(a, b)
    value = a.value + b.value

    def vjp(g):
        return (_unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape))

    return Tensor(value, parents=(a, b), vjp=vjp)


def sub(a, b):
    if not (isinstance(a, Tensor) or isinstance(b, Tensor)):
        return np.subtract(a, b)
    a, b = _aligned(a, b)
    value = a.value - b.value

    def vjp(g):
        return (_unbroadcast(g, a.value.shape), _unbroadcast(-g, b.value.shape))

    return Tensor(value, parents=(a, b), vjp=vjp)


def mul(a, b):
    if not (isinstance(a, Tensor) or isinstance(b, Tensor)):
        return np.multiply(a, b)
    a, b = _aligned(a, b)
    value = a.value * b.value

    def vjp(g):
        return (
            _unbroadcast(g * b.value, a.value.shape),
            _unbroadcast(g * a.value, b.value.shape),
        )

    return Tensor(value, parents=(a, b), vjp=vjp)


def relu(x):
    if not isinstance(x, Tensor):
        note_kinks(np.asarray(x) > 0)
        return np.maximum(x, 0)
    pos = x.value > 0
    note_kinks(pos)

    def vjp(g):
        return (g * pos,)

    return Tensor(np.where(pos, x.value, 0), parents=(x,), vjp=vjp)


def sigmoid(x):
    if not isinstance(x, Tensor):
        return expit(x)
    y = expit(x.value)

    def vjp(g):
        return (g * (y * (1.0 - y)),)

    return Tensor(y, parents=(x,), vjp=vjp)


def absval(x):
    """Elementwise |x| with subgradient 0 at 0."""
    if not isinstance(x, Tensor):
        note_kinks(np.sign(x).astype(np.int8))
        return np.abs(x)
    s = np.sign(x.value)
    note_kinks(s.astype(np.int8))

    def vjp(g):
        return (g * s,)

    return Tensor(np.abs(x.value), parents=(x,), vjp=vjp)


def vsum(x):
    if not isinstance(x, Tensor):
        return np.sum(x)
    shape = x.value.shape

    def vjp(g):
        return (np.broadcast_to(g, shape),)

    return Tensor(np.sum(x.value), parents=(x,), vjp=vjp)


def vmean(x):
    if not isinstance(x, Tensor):
        return np.mean(x)
    return vsum(x) / float(np.prod(x.value.shape) or 1)


def reshape(x, shape):
    if not isinstance(x, Tensor):
        return np.reshape(x, shape)
    old = x.value.shape

    def vjp(g):
        return (g.reshape(old),)

    return Tensor(x.value.reshape(shape), parents=(x,), vjp=vjp)


def concat(parts, axis=-1):
    if not any(isinstance(p, Tensor) for p in parts):
        return np.concatenate(parts, axis=axis)
    parts = [constant(p) for p in parts]
    value = np.concatenate([p.value for p in parts], axis=axis)
    sizes = [p.value.shape[axis] for p in parts]

    def vjp(g):
        return tuple(np.split(g, np.cumsum(sizes)[:-1], axis=axis))

    return Tensor(value, parents=tuple(parts), vjp=vjp)


def affine(x, w, b):
    """x @ w + b for a (B, in) batch; fused so the backward pass is three GEMMs."""
    if not isinstance(x, Tensor) and not isinstance(w, Tensor):
        return np.asarray(x) @ np.asarray(w) + np.asarray(b)
    x, w, b = constant(x), constant(w), constant(b)
    value = x.value @ w.value + b.value

    def vjp(g):
        return (g @ w.value.T, x.value.T @ g, g.sum(axis=0))

    return Tensor(value, parents=(x, w, b), vjp=vjp)


def gather_interp(table, idx: np.ndarray, weights: np.ndarray):
    """Weighted gather: out[b] = sum_k weights[b, k] * table[idx[b, k]].

    This is the inner step of multi-resolution hash encoding: `idx` holds the
    K cell-corner rows per sample and `weights` the interpolation weights.
    Both are constants; gradients flow into `table` only (via bincount scatter).
    """
    rows = table.value.shape[0] if isinstance(table, Tensor) else table.shape[0]
    tv = table.value if isinstance(table, Tensor) else np.asarray(table)
    value = np.einsum("bk,bkd->bd", weights, tv[idx], optimize=True)
    if not isinstance(table, Tensor):
        return value

    def vjp(g):
        contrib = weights[:, :, None] * g[:, None, :]
        flat = idx.ravel()
        d = contrib.shape[-1]
        # bincount accumulates in float64 internally; store in the grad dtype.
        out = np.empty((rows, d), dtype=g.dtype)
        for j in range(d):
            out[:, j] = np.bincount(flat, weights=contrib[:, :, j].ravel(), minlength=rows)
        return (out,)

    return Tensor(value, parents=(table,), vjp=vjp)


def _bilinear_pieces(flow_value: np.ndarray, h: int, w: int):
    """Shared geometry for bilinear warps: clamped corner indices and fractions."""
    ys, xs = np.meshgrid(np.arange(h, dtype=flow_value.dtype),
                         np.arange(w, dtype=flow_value.dtype), indexing="ij")
    px = xs + flow_value[:, :, 0]
    py = ys + flow_value[:, :, 1]
    valid = (px >= 0) & (px <= w - 1) & (py >= 0) & (py <= h - 1)
    pxc = np.clip(px, 0, w - 1)
    pyc = np.clip(py, 0, h - 1)
    x0 = np.clip(np.floor(pxc).astype(np.int64), 0, max(w - 2, 0))
    y0 = np.clip(np.floor(pyc).astype(np.int64), 0, max(h - 2, 0))
    fx = (pxc - x0).astype(flow_value.dtype)
    fy = (pyc - y0).astype(flow_value.dtype)
    note_kinks(x0)
    note_kinks(y0)
    note_kinks(valid)
    return px, py, valid, x0, y0, fx, fy


def warp_bilinear(image, flow):
    """Backward-warp `image` (H, W, C) by `flow` (H, W, 2) = (dx, dy) per pixel.

    out(y, x) = image(y + dy, x + dx) with bilinear interpolation; samples are
    edge-clamped, and the returned validity mask (ndarray) is 0 wherever the
    sample point leaves the frame.  Differentiates w.r.t. both image and flow.
    """
    if not (isinstance(image, Tensor) or isinstance(flow, Tensor)):
        out, valid = _warp_value(np.asarray(image), np.asarray(flow))
        return out, valid
    image, flow = constant(image), constant(flow)
    iv = image.value
    h, w = iv.shape[:2]
    px, py, valid, x0, y0, fx, fy = _bilinear_pieces(flow.value, h, w)
    # min() only binds on degenerate 1-pixel axes, where the far corner's
    # weight is exactly zero anyway.
    x1, y1 = np.minimum(x0 + 1, w - 1), np.minimum(y0 + 1, h - 1)
    w00 = (1 - fx) * (1 - fy)
    w10 = fx * (1 - fy)
    w01 = (1 - fx) * fy
    w11 = fx * fy
    i00 = iv[y0, x0]
    i10 = iv[y0, x1]
    i01 = iv[y1, x0]
    i11 = iv[y1, x1]
    value = (w00[..., None] * i00 + w10[..., None] * i10
             + w01[..., None] * i01 + w11[..., None] * i11)
    # Outside the frame the clamp freezes the sample, so flow gradients vanish there.
    live = valid

    def vjp(g):
        grads = []
        if image.requires_grad:
            c = iv.shape[2]
            di = np.zeros((h * w, c), dtype=g.dtype)
            for wgt, yy, xx in ((w00, y0, x0), (w10, y0, x1), (w01, y1, x0), (w11, y1, x1)):
                flat = (yy * w + xx).ravel()
                contrib = wgt[..., None] * g
                for j in range(c):
                    di[:, j] += np.bincount(flat, weights=contrib[:, :, j].ravel(),
                                            minlength=h * w)
            grads.append(di.reshape(iv.shape))
        else:
            grads.append(None)
        if flow.requires_grad:
            gx = ((1 - fy)[..., None] * (i10 - i00) + fy[..., None] * (i11 - i01))
            gy = ((1 - fx)[..., None] * (i01 - i00) + fx[..., None] * (i11 - i10))
            dsum_x = (g * gx).sum(axis=-1) * live
            dsum_y = (g * gy).sum(axis=-1) * live
            grads.append(np.stack([dsum_x, dsum_y], axis=-1))
        else:
            grads.append(None)
        return tuple(grads)

    return Tensor(value, parents=(image, flow), vjp=vjp), valid


def _warp_value(image: np.ndarray, flow: np.ndarray):
    h, w = image.shape[:2]
    px, py, valid, x0, y0, fx, fy = _bilinear_pieces(flow, h, w)
    x1, y1 = np.minimum(x0 + 1, w - 1), np.minimum(y0 + 1, h - 1)
    out = ((1 - fx) * (1 - fy))[..., None] * image[y0, x0] \
        + (fx * (1 - fy))[..., None] * image[y0, x1] \
        + ((1 - fx) * fy)[..., None] * image[y1, x0] \
        + (fx * fy)[..., None] * image[y1, x1]
    return out, valid


def backward(loss: Tensor) -> None:
    """Reverse-mode sweep from a scalar loss.

    Gradients are carried in the loss's own float dtype, so a float64 forward
    (as used by finite-difference checks) gets float64 gradients while float32
    training stays in float32.
    """
    if loss.value.shape != ():
        raise ValueError("backward expects a scalar loss")
    if not np.isfinite(loss.value):
        raise NumericalError("loss is non-finite; aborting backward pass")
    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    seed_dtype = loss.value.dtype if loss.value.dtype == np.float64 else np.float32
    loss.grad = np.array(1.0, dtype=seed_dtype)
    for node in reversed(order):
        if node._vjp is None or node.grad is None:
            continue
        for parent, g in zip(node._parents, node._vjp(node.grad)):
            if g is None or not parent.requires_grad:
                continue
            g = np.asarray(g)
            if parent.grad is None:
                # A vjp may hand back (a view of) the incoming gradient, so the
                # buffer is only borrowed; copy lazily on the first accumulation.
                parent.grad = g
                parent._grad_borrowed = True
            elif parent._grad_borrowed:
                parent.grad = parent.grad + g
                parent._grad_borrowed = False
            else:
                parent.grad += g
