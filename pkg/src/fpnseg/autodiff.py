"""Reverse-mode automatic differentiation over dense numpy arrays.

A ``Var`` wraps an ndarray and remembers how it was produced; ``backward``
runs a reverse topological sweep and accumulates gradients. Values are
float32 during training; every op is dtype-generic so the gradient-check
harness can rerun the same graph in float64.

Set ``DEBUG = True`` to make every op assert that its output is finite.
"""
import numpy as np

from .errors import ShapeError

DEBUG = False


def _check_finite(a):
    if DEBUG and not np.all(np.isfinite(a)):
        raise FloatingPointError("non-finite tensor produced")


class Var:
    """A node of the computation graph: value + parents + backward rule."""

    __slots__ = ("data", "grad", "parents", "_backward", "name")

    # make ndarray <op> Var dispatch to our reflected operators instead of
    # numpy broadcasting over the Var object
    __array_ufunc__ = None

    def __init__(self, data, parents=(), backward=None, name=None):
        self.data = np.asarray(data)
        _check_finite(self.data)
        self.grad = None
        self.parents = tuple(parents)
        self._backward = backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    # -- elementwise arithmetic (with broadcasting) --

    def _coerce(self, other):
        if isinstance(other, Var):
            return other
        return Var(np.asarray(other, dtype=self.data.dtype))

    def __add__(self, other):
        other = self._coerce(other)
        out = Var(self.data + other.data, (self, other))

        def bwd(g):
            self._accum(_unbroadcast(g, self.data.shape))
            other._accum(_unbroadcast(g, other.data.shape))

        out._backward = bwd
        return out

    __radd__ = __add__

    def __mul__(self, other):
        other = self._coerce(other)
        out = Var(self.data * other.data, (self, other))

        def bwd(g):
            self._accum(_unbroadcast(g * other.data, self.data.shape))
            other._accum(_unbroadcast(g * self.data, other.data.shape))

        out._backward = bwd
        return out

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) + (-self)

    def __truediv__(self, other):
        other = self._coerce(other)
        out = Var(self.data / other.data, (self, other))

        def bwd(g):
            self._accum(_unbroadcast(g / other.data, self.data.shape))
            other._accum(
                _unbroadcast(-g * self.data / (other.data * other.data), other.data.shape)
            )

        out._backward = bwd
        return out

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __repr__(self):
        return f"Var(shape={self.data.shape}, name={self.name})"


def _unbroadcast(g, shape):
    """Sum a broadcast gradient back to the original shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def as_var(x):
    return x if isinstance(x, Var) else Var(x)


# ---------------------------------------------------------------------------
# graph traversal


def _toposort(root):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            stack.append((p, False))
    return order


def backward(loss):
    """Reverse sweep from a scalar loss; fills .grad on every ancestor."""
    if loss.data.size != 1:
        raise ShapeError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    order = _toposort(loss)
    for v in order:
        v.grad = None
    loss.grad = np.ones_like(loss.data)
    for v in reversed(order):
        if v._backward is not None and v.grad is not None:
            v._backward(v.grad)
    return order


def param_grads(loss, params):
    """Gradients of ``loss`` w.r.t. a named parameter set.

    Parameters not reachable from the loss get zero gradients.
    """
    order = backward(loss)
    out = {name: np.zeros_like(p.value) for name, p in params.items()}
    for v in order:
        if v.name is not None and v.name in out and v.grad is not None:
            out[v.name] = out[v.name] + v.grad
    return out


# ---------------------------------------------------------------------------
# reductions and simple elementwise ops


def vsum(x):
    x = as_var(x)
    out = Var(np.asarray(x.data.sum(), dtype=x.data.dtype), (x,))

    def bwd(g):
        x._accum(np.broadcast_to(g, x.data.shape))

    out._backward = bwd
    return out


def vmean(x):
    x = as_var(x)
    return vsum(x) * (1.0 / x.data.size)


def log(x):
    x = as_var(x)
    out = Var(np.log(x.data), (x,))

    def bwd(g):
        x._accum(g / x.data)

    out._backward = bwd
    return out


def clip(x, lo, hi):
    """Clamp; gradient passes only where the value was strictly inside."""
    x = as_var(x)
    out = Var(np.clip(x.data, lo, hi), (x,))
    mask = ((x.data > lo) & (x.data < hi)).astype(x.data.dtype)

    def bwd(g):
        x._accum(g * mask)

    out._backward = bwd
    return out


def relu(x):
    x = as_var(x)
    out = Var(np.maximum(x.data, 0), (x,))
    mask = (x.data > 0).astype(x.data.dtype)  # gradient 0 at exactly 0

    def bwd(g):
        x._accum(g * mask)

    out._backward = bwd
    return out


def identity(x):
    return as_var(x)


def add(a, b):
    a, b = as_var(a), as_var(b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add: shapes {a.data.shape} and {b.data.shape} differ")
    return a + b


# ---------------------------------------------------------------------------
# convolution


def _im2col(x, kh, kw, stride, padding, pad_value=0.0):
    n, c, h, w = x.shape
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    if padding:
        xp = np.pad(
            x,
            ((0, 0), (0, 0), (padding, padding), (padding, padding)),
            constant_values=pad_value,
        )
    else:
        xp = x
    cols = np.empty((n, c, kh, kw, ho, wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    return cols, ho, wo


def _col2im(cols, xshape, stride, padding):
    n, c, h, w = xshape
    kh, kw, ho, wo = cols.shape[2], cols.shape[3], cols.shape[4], cols.shape[5]
    xp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols[:, :, i, j]
    if padding:
        return xp[:, :, padding : padding + h, padding : padding + w]
    return xp


def _im2col_nhwc(x, kh, kw, stride, padding):
    """Patches laid out (n, ho, wo, cin, kh, kw) so the GEMM needs no copy."""
    n, c, h, w = x.shape
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    if padding:
        xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x
    cols = np.empty((n, ho, wo, c, kh, kw), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            src = xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
            cols[:, :, :, :, i, j] = src.transpose(0, 2, 3, 1)
    return cols, ho, wo


def _col2im_nhwc(cols, xshape, stride, padding):
    n, c, h, w = xshape
    kh, kw = cols.shape[4], cols.shape[5]
    ho, wo = cols.shape[1], cols.shape[2]
    xp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols[
                :, :, :, :, i, j
            ].transpose(0, 3, 1, 2)
    if padding:
        return xp[:, :, padding : padding + h, padding : padding + w]
    return xp


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """Cross-correlation (no kernel flip) over NCHW input, lowered to a GEMM."""
    x, weight = as_var(x), as_var(weight)
    n, cin, h, w = x.data.shape
    cout, cin_w, kh, kw = weight.data.shape
    if cin != cin_w:
        raise ShapeError(f"conv2d: input has {cin} channels, weight expects {cin_w}")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ShapeError("conv2d: kernel larger than padded input")
    cols, ho, wo = _im2col_nhwc(x.data, kh, kw, stride, padding)
    k = cin * kh * kw
    cols2d = cols.reshape(n * ho * wo, k)
    w2d = weight.data.reshape(cout, k)
    y2d = cols2d @ w2d.T
    if bias is not None:
        bias = as_var(bias)
        y2d += bias.data
    y = np.ascontiguousarray(y2d.reshape(n, ho, wo, cout).transpose(0, 3, 1, 2))
    parents = [x, weight] if bias is None else [x, weight, bias]
    out = Var(y, parents)

    def bwd(g):
        g2d = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * ho * wo, cout)
        weight._accum((g2d.T @ cols2d).reshape(weight.data.shape))
        dcols = (g2d @ w2d).reshape(n, ho, wo, cin, kh, kw)
        x._accum(_col2im_nhwc(dcols, x.data.shape, stride, padding))
        if bias is not None:
            bias._accum(g2d.sum(axis=0))

    out._backward = bwd
    return out


# ---------------------------------------------------------------------------
# batch normalization


def batch_norm2d(x, gamma, beta, running_mean, running_var, mode, momentum=0.1, eps=1e-5):
    """Per-channel batch norm over N,H,W.

    Train mode normalizes with biased batch variance and updates the running
    stats in place (running variance stored unbiased). Eval mode uses the
    running stats.
    """
    if eps <= 0:
        raise ValueError("batch_norm2d: epsilon must be positive")
    x, gamma, beta = as_var(x), as_var(gamma), as_var(beta)
    n, c, h, w = x.data.shape
    if mode == "train":
        m = n * h * w
        if m == 1:
            raise ShapeError("batch_norm2d: cannot compute batch variance from one value")
        mean = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))  # biased
        running_mean *= 1 - momentum
        running_mean += momentum * mean.astype(running_mean.dtype)
        running_var *= 1 - momentum
        running_var += momentum * (var * (m / (m - 1))).astype(running_var.dtype)
    else:
        mean = running_mean.astype(x.data.dtype)
        var = running_var.astype(x.data.dtype)
    ivar = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.data.dtype))
    xhat = (x.data - mean.reshape(1, c, 1, 1)) * ivar.reshape(1, c, 1, 1)
    y = gamma.data.reshape(1, c, 1, 1) * xhat + beta.data.reshape(1, c, 1, 1)
    out = Var(y, (x, gamma, beta))

    def bwd(g):
        gamma._accum((g * xhat).sum(axis=(0, 2, 3)))
        beta._accum(g.sum(axis=(0, 2, 3)))
        dxhat = g * gamma.data.reshape(1, c, 1, 1)
        iv = ivar.reshape(1, c, 1, 1)
        if mode == "train":
            m = n * h * w
            s1 = dxhat.sum(axis=(0, 2, 3), keepdims=True)
            s2 = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
            x._accum(iv * (dxhat - s1 / m - xhat * s2 / m))
        else:
            x._accum(dxhat * iv)

    out._backward = bwd
    return out


# ---------------------------------------------------------------------------
# pooling / resampling


def max_pool2d(x, kernel, stride, padding=0):
    """Windowed max; gradient routes to the first (row-major) max per window."""
    x = as_var(x)
    n, c, h, w = x.data.shape
    if h + 2 * padding < kernel or w + 2 * padding < kernel:
        raise ShapeError("max_pool2d: window larger than padded input")
    cols, ho, wo = _im2col(x.data, kernel, kernel, stride, padding, pad_value=-np.inf)
    flat = cols.reshape(n, c, kernel * kernel, ho, wo)
    idx = flat.argmax(axis=2)  # first occurrence on ties
    y = np.take_along_axis(flat, idx[:, :, None], axis=2)[:, :, 0]
    out = Var(np.ascontiguousarray(y), (x,))

    def bwd(g):
        di, dj = idx // kernel, idx % kernel
        oh = np.arange(ho).reshape(1, 1, ho, 1)
        ow = np.arange(wo).reshape(1, 1, 1, wo)
        rows = oh * stride + di
        colsi = ow * stride + dj
        nn = np.arange(n).reshape(n, 1, 1, 1)
        cc = np.arange(c).reshape(1, c, 1, 1)
        gxp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=g.dtype)
        np.add.at(gxp, (np.broadcast_to(nn, idx.shape), np.broadcast_to(cc, idx.shape), rows, colsi), g)
        if padding:
            gxp = gxp[:, :, padding : padding + h, padding : padding + w]
        x._accum(gxp)

    out._backward = bwd
    return out


def upsample_nearest(x, factor):
    x = as_var(x)
    if factor < 1:
        raise ValueError("upsample_nearest: factor must be >= 1")
    if factor == 1:
        return x
    n, c, h, w = x.data.shape
    out = Var(x.data.repeat(factor, axis=2).repeat(factor, axis=3), (x,))

    def bwd(g):
        x._accum(g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)))

    out._backward = bwd
    return out


def _interp_matrix(n_in, n_out, dtype):
    """Row-stochastic 1-D bilinear interpolation matrix (half-pixel centers)."""
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    s = np.clip(src, 0, n_in - 1)
    i0 = np.floor(s).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    f = (s - i0).astype(dtype)
    mat = np.zeros((n_out, n_in), dtype=dtype)
    np.add.at(mat, (np.arange(n_out), i0), 1 - f)
    np.add.at(mat, (np.arange(n_out), i1), f)
    return mat


def upsample_bilinear(x, out_h, out_w):
    x = as_var(x)
    n, c, h, w = x.data.shape
    if out_h < h or out_w < w:
        raise ShapeError("upsample_bilinear: output smaller than input")
    a = _interp_matrix(h, out_h, x.data.dtype)
    b = _interp_matrix(w, out_w, x.data.dtype)
    y = np.matmul(np.matmul(a, x.data), b.T)
    out = Var(y, (x,))

    def bwd(g):
        x._accum(np.matmul(np.matmul(a.T, g), b))

    out._backward = bwd
    return out


# ---------------------------------------------------------------------------
# channel ops


def concat_channels(tensors):
    tensors = [as_var(t) for t in tensors]
    ref = tensors[0].data.shape
    for t in tensors[1:]:
        s = t.data.shape
        if (s[0], s[2], s[3]) != (ref[0], ref[2], ref[3]):
            raise ShapeError(f"concat_channels: incompatible shapes {ref} and {s}")
    out = Var(np.concatenate([t.data for t in tensors], axis=1), tensors)
    splits = np.cumsum([t.data.shape[1] for t in tensors])[:-1]

    def bwd(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=1)):
            t._accum(piece)

    out._backward = bwd
    return out


def softmax_channels(x):
    x = as_var(x)
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)
    out = Var(y, (x,))

    def bwd(g):
        x._accum(y * (g - (g * y).sum(axis=1, keepdims=True)))

    out._backward = bwd
    return out


def spatial_dropout(x, p, mode, rng):
    """Zero whole channels with probability p at train time, scaled by 1/(1-p)."""
    x = as_var(x)
    if not 0 <= p < 1:
        raise ValueError("spatial_dropout: p must be in [0, 1)")
    if mode != "train" or p == 0:
        return x
    n, c = x.data.shape[:2]
    keep = (rng.uniform(size=(n, c, 1, 1)) >= p).astype(x.data.dtype)
    scale = np.asarray(1.0 / (1.0 - p), dtype=x.data.dtype)
    mask = keep * scale
    out = Var(x.data * mask, (x,))

    def bwd(g):
        x._accum(g * mask)

    out._backward = bwd
    return out
