"""A small reverse-mode differentiation engine over dense channel-major 3D arrays.

Every :class:`Tensor` holds a value of shape ``(channels, d0, d1, d2)`` (or any
shape for parameters) and, after :meth:`Tensor.backward`, the gradient of the
seeded output with respect to it.  Operations record a closure that pushes the
output gradient to their inputs; ``backward`` replays those closures in reverse
topological order.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, value, requires_grad=False, parents=(), name=""):
        self.value = value
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = g
        else:
            self.grad = self.grad + g

    def backward(self, seed=None):
        """Propagate ``seed`` (defaults to ones) from this tensor to every ancestor."""
        order = []
        seen = set()
        stack = [(self, False)]
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
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.value) if seed is None else np.asarray(seed, dtype=self.value.dtype)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _result(value, parents, backward):
    needs = any(p.requires_grad for p in parents)
    out = Tensor(value, requires_grad=needs, parents=parents if needs else ())
    if needs:
        out._backward = backward
    return out


def _shifts(dims):
    """Flat offsets of the 27 taps on the padded grid, and the valid output range."""
    d0, d1, d2 = dims
    s1 = (d1 + 2) * (d2 + 2)
    s2 = d2 + 2
    total = (d0 + 2) * s1
    offsets = [(a - 1) * s1 + (b - 1) * s2 + (c - 1) for a in range(3) for b in range(3) for c in range(3)]
    lo = s1 + s2 + 1
    return offsets, lo, total - lo, total


def _embed(flat_range, lo, total, dims):
    """Place values computed on padded positions [lo, hi) back onto the unpadded grid."""
    d0, d1, d2 = dims
    ch = flat_range.shape[0]
    full = np.zeros((ch, total), dtype=flat_range.dtype)
    full[:, lo:lo + flat_range.shape[1]] = flat_range
    return full.reshape(ch, d0 + 2, d1 + 2, d2 + 2)[:, 1:-1, 1:-1, 1:-1]


def conv3d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Zero-padded stride-1 convolution with a cubic kernel of size 1 or 3.

    ``x`` has shape ``(c, d0, d1, d2)`` and ``w`` shape ``(out, c, k, k, k)``.
    For ``k == 3`` the input is zero padded and flattened, so each kernel tap
    is a constant shift of the flat index and its column block is a
    contiguous slice.
    """
    c, d0, d1, d2 = x.shape
    o, ci, k = w.shape[0], w.shape[1], w.shape[2]
    if ci != c:
        raise ValueError("conv expects %d input channels, got %d" % (ci, c))
    dims = (d0, d1, d2)
    if k == 1:
        wmat = w.value.reshape(o, c)
        cols = x.value.reshape(c, -1)
        out = (cols.T @ wmat.T).T + b.value[:, None]
        out = out.reshape(o, d0, d1, d2)
    elif k == 3:
        # rows ordered (tap, in) to match the column blocks
        wmat = w.value.transpose(0, 2, 3, 4, 1).reshape(o, 27 * c)
        offsets, lo, hi, total = _shifts(dims)
        flat = np.pad(x.value, ((0, 0), (1, 1), (1, 1), (1, 1))).reshape(c, total)
        cols = np.empty((27, c, hi - lo), dtype=x.value.dtype)
        for t, off in enumerate(offsets):
            cols[t] = flat[:, lo + off:hi + off]
        cols = cols.reshape(27 * c, hi - lo)
        out = (cols.T @ wmat.T).T + b.value[:, None]
        out = _embed(out, lo, total, dims)
    else:
        raise ValueError("unsupported kernel size %d" % k)

    def backward(g):
        if k == 1:
            g2 = g.reshape(o, -1)
        else:
            g2 = np.pad(g, ((0, 0), (1, 1), (1, 1), (1, 1))).reshape(o, total)[:, lo:hi]
        if w.requires_grad:
            dw = (cols @ g2.T).T
            if k == 1:
                w._accumulate(dw.reshape(w.shape))
            else:
                w._accumulate(dw.reshape(o, 3, 3, 3, c).transpose(0, 4, 1, 2, 3))
        if b.requires_grad:
            b._accumulate(g2.sum(axis=1))
        if x.requires_grad:
            dcols = (g2.T @ wmat).T
            if k == 1:
                x._accumulate(dcols.reshape(x.shape))
            else:
                dflat = np.zeros((c, total), dtype=g.dtype)
                for t, off in enumerate(offsets):
                    dflat[:, lo + off:hi + off] += dcols[t * c:(t + 1) * c]
                x._accumulate(dflat.reshape(c, d0 + 2, d1 + 2, d2 + 2)[:, 1:-1, 1:-1, 1:-1])

    return _result(np.ascontiguousarray(out), (x, w, b), backward)


def relu(x: Tensor) -> Tensor:
    mask = x.value > 0
    return _result(x.value * mask, (x,), lambda g: x._accumulate(g * mask))


def add(x: Tensor, y: Tensor) -> Tensor:
    def backward(g):
        if x.requires_grad:
            x._accumulate(g)
        if y.requires_grad:
            y._accumulate(g)

    return _result(x.value + y.value, (x, y), backward)


def sigmoid(x: Tensor) -> Tensor:
    v = x.value
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    # s * (1 - s) written as s(z) * s(-z) keeps precision once s rounds to 1
    enz = np.exp(-np.abs(v))
    deriv = out * np.where(pos, enz / (1.0 + enz), 1.0 - out)
    return _result(out, (x,), lambda g: x._accumulate(g * deriv))


def maxpool2(x: Tensor) -> Tensor:
    """2x2x2 max pooling; ties go to the first element of each block in (a, b, c) order."""
    c, d0, d1, d2 = x.shape
    if d0 % 2 or d1 % 2 or d2 % 2:
        raise ValueError("maxpool2 needs even spatial dims, got %r" % (x.shape[1:],))
    h0, h1, h2 = d0 // 2, d1 // 2, d2 // 2
    blocks = (
        x.value.reshape(c, h0, 2, h1, 2, h2, 2)
        .transpose(0, 1, 3, 5, 2, 4, 6)
        .reshape(c, h0, h1, h2, 8)
    )
    idx = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], -1)[..., 0]

    def backward(g):
        gb = np.zeros((c, h0, h1, h2, 8), dtype=g.dtype)
        np.put_along_axis(gb, idx[..., None], g[..., None], -1)
        gx = gb.reshape(c, h0, h1, h2, 2, 2, 2).transpose(0, 1, 4, 2, 5, 3, 6).reshape(x.shape)
        x._accumulate(gx)

    return _result(out, (x,), backward)


def upsample2(x: Tensor) -> Tensor:
    """Nearest-neighbour upsampling by 2 along every spatial axis."""
    c, d0, d1, d2 = x.shape
    out = np.broadcast_to(x.value[:, :, None, :, None, :, None], (c, d0, 2, d1, 2, d2, 2))
    out = out.reshape(c, 2 * d0, 2 * d1, 2 * d2)

    def backward(g):
        x._accumulate(g.reshape(c, d0, 2, d1, 2, d2, 2).sum(axis=(2, 4, 6)))

    return _result(out, (x,), backward)


def concat(x: Tensor, y: Tensor) -> Tensor:
    """Channel concatenation."""
    cx = x.shape[0]

    def backward(g):
        if x.requires_grad:
            x._accumulate(g[:cx])
        if y.requires_grad:
            y._accumulate(g[cx:])

    return _result(np.concatenate([x.value, y.value], axis=0), (x, y), backward)
