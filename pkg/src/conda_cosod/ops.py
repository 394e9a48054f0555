"""Differentiable operations.

All image-like tensors are channels-last: ``[..., H, W, C]``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Function, ShapeError, Tensor, add_macs, register


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: np.ndarray, b: np.ndarray) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- elementwise


@register("add")
class Add(Function):
    @staticmethod
    def forward(ctx, a, b):
        _check_broadcast(a, b)
        ctx.save(sa=a.shape, sb=b.shape)
        return a + b

    @staticmethod
    def backward(ctx, g):
        return _unbroadcast(g, ctx.sa), _unbroadcast(g, ctx.sb)


@register("sub")
class Sub(Function):
    @staticmethod
    def forward(ctx, a, b):
        _check_broadcast(a, b)
        ctx.save(sa=a.shape, sb=b.shape)
        return a - b

    @staticmethod
    def backward(ctx, g):
        return _unbroadcast(g, ctx.sa), _unbroadcast(-g, ctx.sb)


@register("mul")
class Mul(Function):
    @staticmethod
    def forward(ctx, a, b):
        _check_broadcast(a, b)
        ctx.save(a=a, b=b)
        return a * b

    @staticmethod
    def backward(ctx, g):
        a, b = ctx.a, ctx.b
        ga = _unbroadcast(g * b, a.shape) if ctx.needs_input_grad[0] else None
        gb = _unbroadcast(g * a, b.shape) if ctx.needs_input_grad[1] else None
        return ga, gb


@register("div")
class Div(Function):
    @staticmethod
    def forward(ctx, a, b):
        _check_broadcast(a, b)
        ctx.save(a=a, b=b)
        return a / b

    @staticmethod
    def backward(ctx, g):
        a, b = ctx.a, ctx.b
        ga = _unbroadcast(g / b, a.shape) if ctx.needs_input_grad[0] else None
        gb = _unbroadcast(-g * a / (b * b), b.shape) if ctx.needs_input_grad[1] else None
        return ga, gb


@register("scale")
class Scale(Function):
    @staticmethod
    def forward(ctx, x, factor=1.0):
        ctx.save(factor=factor)
        return x * x.dtype.type(factor)

    @staticmethod
    def backward(ctx, g):
        return (g * g.dtype.type(ctx.factor),)


@register("relu")
class ReLU(Function):
    @staticmethod
    def forward(ctx, x):
        mask = x > 0
        ctx.save(mask=mask)
        return np.where(mask, x, x.dtype.type(0))

    @staticmethod
    def backward(ctx, g):
        return (np.where(ctx.mask, g, g.dtype.type(0)),)


@register("sigmoid")
class Sigmoid(Function):
    @staticmethod
    def forward(ctx, x):
        # split by sign to keep exp() bounded
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        ctx.save(out=out)
        return out

    @staticmethod
    def backward(ctx, g):
        s = ctx.out
        return (g * s * (1.0 - s),)


@register("tanh")
class Tanh(Function):
    @staticmethod
    def forward(ctx, x):
        out = np.tanh(x)
        ctx.save(out=out)
        return out

    @staticmethod
    def backward(ctx, g):
        return (g * (1.0 - ctx.out * ctx.out),)


@register("log")
class Log(Function):
    @staticmethod
    def forward(ctx, x):
        if np.any(x <= 0):
            raise ValueError("log of non-positive value")
        ctx.save(x=x)
        return np.log(x)

    @staticmethod
    def backward(ctx, g):
        return (g / ctx.x,)


@register("clamp")
class Clamp(Function):
    """Clip into ``[lo, hi]``; gradient passes only where the input was inside."""

    @staticmethod
    def forward(ctx, x, lo=None, hi=None):
        lo_a = -np.inf if lo is None else np.asarray(lo, dtype=x.dtype)
        hi_a = np.inf if hi is None else np.asarray(hi, dtype=x.dtype)
        inside = (x >= lo_a) & (x <= hi_a)
        ctx.save(inside=inside)
        return np.clip(x, lo_a, hi_a)

    @staticmethod
    def backward(ctx, g):
        return (np.where(ctx.inside, g, g.dtype.type(0)),)


# ----------------------------------------------------------------- reductions


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


@register("sum")
class Sum(Function):
    @staticmethod
    def forward(ctx, x, axis=None, keepdims=False):
        axes = _norm_axis(axis, x.ndim)
        ctx.save(shape=x.shape, axes=axes, keepdims=keepdims)
        return np.asarray(x.sum(axis=axes, keepdims=keepdims))

    @staticmethod
    def backward(ctx, g):
        if not ctx.keepdims:
            g = np.expand_dims(g, ctx.axes)
        return (np.broadcast_to(g, ctx.shape).copy(),)


@register("mean")
class Mean(Function):
    @staticmethod
    def forward(ctx, x, axis=None, keepdims=False):
        axes = _norm_axis(axis, x.ndim)
        count = int(np.prod([x.shape[a] for a in axes]))
        ctx.save(shape=x.shape, axes=axes, keepdims=keepdims, count=count)
        return np.asarray(x.mean(axis=axes, keepdims=keepdims))

    @staticmethod
    def backward(ctx, g):
        if not ctx.keepdims:
            g = np.expand_dims(g, ctx.axes)
        return (np.broadcast_to(g / ctx.count, ctx.shape).copy(),)


# --------------------------------------------------------------------- layout


@register("reshape")
class Reshape(Function):
    @staticmethod
    def forward(ctx, x, shape=()):
        ctx.save(shape=x.shape)
        return x.reshape(shape)

    @staticmethod
    def backward(ctx, g):
        return (g.reshape(ctx.shape),)


@register("transpose")
class Transpose(Function):
    @staticmethod
    def forward(ctx, x, axes=None):
        axes = tuple(range(x.ndim))[::-1] if not axes else tuple(a % x.ndim for a in axes)
        ctx.save(axes=axes)
        return np.ascontiguousarray(x.transpose(axes))

    @staticmethod
    def backward(ctx, g):
        return (np.ascontiguousarray(g.transpose(np.argsort(ctx.axes))),)


@register("getitem")
class GetItem(Function):
    """Basic indexing (ints, slices, Ellipsis, None)."""

    @staticmethod
    def forward(ctx, x, index=()):
        ctx.save(shape=x.shape, index=index)
        return np.ascontiguousarray(x[index])

    @staticmethod
    def backward(ctx, g):
        out = np.zeros(ctx.shape, dtype=g.dtype)
        out[ctx.index] += g
        return (out,)


class _Stack(Function):
    @staticmethod
    def forward(ctx, *xs, axis=0):
        ctx.save(n=len(xs), axis=axis)
        return np.stack(xs, axis=axis)

    @staticmethod
    def backward(ctx, g):
        return tuple(np.ascontiguousarray(p) for p in np.moveaxis(g, ctx.axis, 0))


register("stack")(_Stack)


class _Concat(Function):
    @staticmethod
    def forward(ctx, *xs, axis=0):
        ctx.save(sizes=[x.shape[axis] for x in xs], axis=axis)
        return np.concatenate(xs, axis=axis)

    @staticmethod
    def backward(ctx, g):
        cuts = np.cumsum(ctx.sizes)[:-1]
        return tuple(np.ascontiguousarray(p) for p in np.split(g, cuts, axis=ctx.axis))


register("concat")(_Concat)


# -------------------------------------------------------------- linear maps


@register("matmul")
class MatMul(Function):
    @staticmethod
    def forward(ctx, a, b):
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
            raise ShapeError(f"matmul shapes {a.shape} @ {b.shape}")
        ctx.save(a=a, b=b)
        out = a @ b
        add_macs("matmul", out.size * a.shape[-1])
        return out

    @staticmethod
    def backward(ctx, g):
        a, b = ctx.a, ctx.b
        ga = _unbroadcast(g @ np.swapaxes(b, -1, -2), a.shape) if ctx.needs_input_grad[0] else None
        gb = _unbroadcast(np.swapaxes(a, -1, -2) @ g, b.shape) if ctx.needs_input_grad[1] else None
        return ga, gb


@register("linear")
class Linear(Function):
    """Affine map on the last axis: ``x @ W + b`` with ``W`` of shape [Cin, Cout]."""

    @staticmethod
    def forward(ctx, x, w, b):
        if w.ndim != 2 or x.shape[-1] != w.shape[0] or b.shape != (w.shape[1],):
            raise ShapeError(f"linear: x {x.shape}, W {w.shape}, b {b.shape}")
        flat = x.reshape(-1, w.shape[0])
        ctx.save(flat=flat, w=w, xshape=x.shape)
        add_macs("linear", flat.shape[0] * w.shape[0] * w.shape[1])
        return (flat @ w + b).reshape(x.shape[:-1] + (w.shape[1],))

    @staticmethod
    def backward(ctx, g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = (g2 @ ctx.w.T).reshape(ctx.xshape) if ctx.needs_input_grad[0] else None
        gw = ctx.flat.T @ g2 if ctx.needs_input_grad[1] else None
        gb = g2.sum(axis=0) if ctx.needs_input_grad[2] else None
        return gx, gw, gb


@register("l2_normalize")
class L2Normalize(Function):
    @staticmethod
    def forward(ctx, x, eps=1e-8):
        if eps <= 0:
            raise ValueError("eps must be positive")
        norm = np.sqrt(np.sum(x * x, axis=-1, keepdims=True))
        denom = np.maximum(norm, eps)
        out = x / denom
        ctx.save(out=out, denom=denom, active=norm > eps)
        return out

    @staticmethod
    def backward(ctx, g):
        y = ctx.out
        radial = np.where(ctx.active, np.sum(g * y, axis=-1, keepdims=True), 0.0)
        return ((g - y * radial) / ctx.denom,)


# --------------------------------------------------------------- convolution


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    n, c = xp.shape[0], xp.shape[-1]
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))
    win = win[:, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, kh * kw * c)


def _conv_geometry(h, w, kh, kw, stride, padding):
    if padding == "same":
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError("same padding needs odd kernel sizes")
        ph, pw = (kh - 1) // 2, (kw - 1) // 2
    elif padding == "valid":
        ph = pw = 0
    else:
        raise ValueError(f"unknown padding {padding!r}")
    ho = (h + 2 * ph - kh) // stride + 1
    wo = (w + 2 * pw - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"kernel {kh}x{kw} larger than padded input {h}x{w}")
    return ph, pw, ho, wo


@register("conv2d")
class Conv2d(Function):
    """Cross-correlation of ``x[N,H,W,Cin]`` with ``kernel[kh,kw,Cin,Cout]``."""

    @staticmethod
    def forward(ctx, x, kernel, bias, stride=1, padding="same"):
        if x.ndim != 4 or kernel.ndim != 4:
            raise ShapeError(f"conv2d expects 4-D input and kernel, got {x.shape}, {kernel.shape}")
        kh, kw, cin, cout = kernel.shape
        if x.shape[-1] != cin:
            raise ShapeError(f"conv2d channel mismatch: input {x.shape[-1]}, kernel {cin}")
        if bias.shape != (cout,):
            raise ShapeError(f"conv2d bias shape {bias.shape}, expected ({cout},)")
        if stride < 1:
            raise ValueError("stride must be >= 1")
        n, h, w, _ = x.shape
        ph, pw, ho, wo = _conv_geometry(h, w, kh, kw, stride, padding)
        xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0))) if ph or pw else x
        ctx.save(xp=xp, kernel=kernel, stride=stride, pad=(ph, pw), geom=(n, h, w, ho, wo))
        kmat = kernel.reshape(kh * kw * cin, cout)
        if kh == kw == 1 and stride == 1:
            cols = xp.reshape(-1, cin)
        else:
            cols = _im2col(xp, kh, kw, stride, ho, wo)
        add_macs("conv2d", n * ho * wo * kh * kw * cin * cout)
        out = cols @ kmat
        out += bias
        return out.reshape(n, ho, wo, cout)

    @staticmethod
    def backward(ctx, g):
        xp, kernel, stride = ctx.xp, ctx.kernel, ctx.stride
        n, h, w, ho, wo = ctx.geom
        ph, pw = ctx.pad
        kh, kw, cin, cout = kernel.shape
        g2 = g.reshape(-1, cout)
        gx = gk = gb = None
        if ctx.needs_input_grad[1]:
            if kh == kw == 1 and stride == 1:
                cols = xp.reshape(-1, cin)
            else:
                cols = _im2col(xp, kh, kw, stride, ho, wo)
            gk = (cols.T @ g2).reshape(kernel.shape)
        if ctx.needs_input_grad[2]:
            gb = g2.sum(axis=0)
        if ctx.needs_input_grad[0]:
            if stride == 1 and ho == h and wo == w and cin >= cout:
                # full correlation of the output grad with the flipped kernel
                flipped = kernel[::-1, ::-1].transpose(0, 1, 3, 2).reshape(-1, cin)
                qh, qw = kh - 1 - ph, kw - 1 - pw
                gp = np.pad(g, ((0, 0), (qh, qh), (qw, qw), (0, 0))) if qh or qw else g
                if kh == kw == 1:
                    gcols = gp.reshape(-1, cout)
                else:
                    gcols = _im2col(gp, kh, kw, 1, h, w)
                gx = (gcols @ flipped).reshape(n, h, w, cin)
            else:
                kt = kernel.transpose(0, 1, 3, 2)
                dxp = np.zeros_like(xp)
                for dy in range(kh):
                    for dx in range(kw):
                        dxp[
                            :,
                            dy : dy + (ho - 1) * stride + 1 : stride,
                            dx : dx + (wo - 1) * stride + 1 : stride,
                        ] += (g2 @ kt[dy, dx]).reshape(n, ho, wo, cin)
                gx = np.ascontiguousarray(dxp[:, ph : ph + h, pw : pw + w])
        return gx, gk, gb


@register("max_pool2d")
class MaxPool2d(Function):
    """Non-overlapping ``size x size`` max pooling; ties go to the first element."""

    @staticmethod
    def forward(ctx, x, size=2):
        n, h, w, c = x.shape
        if h % size or w % size:
            raise ShapeError(f"max_pool2d: {h}x{w} not divisible by {size}")
        blocks = x.reshape(n, h // size, size, w // size, size, c).transpose(0, 1, 3, 5, 2, 4)
        blocks = blocks.reshape(n, h // size, w // size, c, size * size)
        idx = blocks.argmax(axis=-1)
        ctx.save(idx=idx, shape=x.shape, size=size)
        return np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

    @staticmethod
    def backward(ctx, g):
        n, h, w, c = ctx.shape
        s = ctx.size
        onehot = np.zeros(g.shape + (s * s,), dtype=g.dtype)
        np.put_along_axis(onehot, ctx.idx[..., None], g[..., None], axis=-1)
        onehot = onehot.reshape(n, h // s, w // s, c, s, s).transpose(0, 1, 4, 2, 5, 3)
        return (np.ascontiguousarray(onehot.reshape(n, h, w, c)),)


# ------------------------------------------------------------- interpolation


def resize_matrix(n_in: int, n_out: int, dtype=np.float64) -> np.ndarray:
    """Row-stochastic [n_out, n_in] linear-interpolation matrix.

    Sample centres follow the half-pixel convention
    ``src = (i + 0.5) * n_in / n_out - 0.5``, clamped to ``[0, n_in - 1]``.
    """
    m = np.zeros((n_out, n_in), dtype=dtype)
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    rows = np.arange(n_out)
    np.add.at(m, (rows, lo), 1.0 - frac)
    np.add.at(m, (rows, hi), frac)
    return m


@register("bilinear_resize")
class BilinearResize(Function):
    """Resize axes -3 and -2 of ``[..., H, W, C]``."""

    @staticmethod
    def forward(ctx, x, out_h=1, out_w=1):
        if out_h < 1 or out_w < 1:
            raise ShapeError("output size must be >= 1")
        if x.ndim < 3:
            raise ShapeError(f"bilinear_resize expects [..., H, W, C], got {x.shape}")
        h, w, c = x.shape[-3:]
        lead = x.shape[:-3]
        rh = resize_matrix(h, out_h, x.dtype) if out_h != h else None
        rw = resize_matrix(w, out_w, x.dtype) if out_w != w else None
        ctx.save(rh=rh, rw=rw, shape=x.shape)
        out = x.reshape(-1, h, w * c)
        if rh is not None:
            out = rh @ out
        out = out.reshape(-1, w, c)
        if rw is not None:
            out = rw @ out
        if rh is not None or rw is not None:
            add_macs("bilinear_resize", 4 * int(np.prod(lead, dtype=np.int64)) * out_h * out_w * c)
        return np.ascontiguousarray(out.reshape(lead + (out_h, out_w, c)))

    @staticmethod
    def backward(ctx, g):
        h, w, c = ctx.shape[-3:]
        out_h, out_w = g.shape[-3], g.shape[-2]
        gx = g.reshape(-1, out_w, c)
        if ctx.rw is not None:
            gx = ctx.rw.T @ gx
        gx = gx.reshape(-1, out_h, w * c)
        if ctx.rh is not None:
            gx = ctx.rh.T @ gx
        return (np.ascontiguousarray(gx.reshape(ctx.shape)),)


def _gather_setup(shape, coords, dtype):
    b, h, w, c = shape
    ch = np.clip(coords[..., 0], 0.0, h - 1)
    cw = np.clip(coords[..., 1], 0.0, w - 1)
    h0 = np.minimum(np.floor(ch), max(h - 2, 0)).astype(np.int64)
    w0 = np.minimum(np.floor(cw), max(w - 2, 0)).astype(np.int64)
    dh = 1 if h > 1 else 0
    dw = 1 if w > 1 else 0
    fh = (ch - h0).astype(dtype).reshape(-1, 1)
    fw = (cw - w0).astype(dtype).reshape(-1, 1)
    base = (np.arange(b) * (h * w)).reshape((b,) + (1,) * (coords.ndim - 2))
    i00 = (base + h0 * w + w0).reshape(-1)
    # flat indices of the four corners: (h0,w0) (h0,w1) (h1,w0) (h1,w1)
    idx = (i00, i00 + dw, i00 + dh * w, i00 + dh * w + dw)
    return idx, fh, fw


@register("bilinear_gather")
class BilinearGather(Function):
    """Sample ``values[B,H,W,C]`` at fractional ``coords[B,...,2]`` (row, col).

    Coordinates are clamped into the valid range first.  Integer coordinates
    reproduce plain index selection exactly; gradients reach both the values
    and, through the interpolation weights, the coordinates (zero where the
    clamp was active).
    """

    @staticmethod
    def forward(ctx, values, coords):
        if values.ndim != 4 or coords.shape[-1] != 2 or coords.shape[0] != values.shape[0]:
            raise ShapeError(f"bilinear_gather: values {values.shape}, coords {coords.shape}")
        if np.isnan(coords).any():
            raise ValueError("NaN coordinates")
        b, h, w, c = values.shape
        idx, fh, fw = _gather_setup(values.shape, coords, values.dtype)
        flat = values.reshape(-1, c)
        v00, v01, v10, v11 = (np.take(flat, i, axis=0) for i in idx)
        gh, gw = 1 - fh, 1 - fw
        out = gh * gw * v00 + gh * fw * v01 + fh * gw * v10 + fh * fw * v11
        inside = np.stack(
            [
                (coords[..., 0] >= 0) & (coords[..., 0] <= h - 1),
                (coords[..., 1] >= 0) & (coords[..., 1] <= w - 1),
            ],
            axis=-1,
        )
        ctx.save(shape=values.shape, idx=idx, fh=fh, fw=fw, corners=(v00, v01, v10, v11),
                 inside=inside)
        add_macs("bilinear_gather", 4 * out.size)
        return out.reshape(coords.shape[:-1] + (c,))

    @staticmethod
    def backward(ctx, g):
        b, h, w, c = ctx.shape
        fh, fw = ctx.fh, ctx.fw
        gh, gw = 1 - fh, 1 - fw
        flat_g = g.reshape(-1, c)
        gv = gc = None
        if ctx.needs_input_grad[0]:
            lin = np.concatenate(ctx.idx)
            contrib = np.concatenate([flat_g * (gh * gw), flat_g * (gh * fw),
                                      flat_g * (fh * gw), flat_g * (fh * fw)])
            gv = np.stack(
                [np.bincount(lin, weights=contrib[:, ch], minlength=b * h * w) for ch in range(c)],
                axis=-1,
            ).astype(g.dtype).reshape(ctx.shape)
        if ctx.needs_input_grad[1]:
            v00, v01, v10, v11 = ctx.corners
            d_h = (flat_g * (gw * (v10 - v00) + fw * (v11 - v01))).sum(-1)
            d_w = (flat_g * (gh * (v01 - v00) + fh * (v11 - v10))).sum(-1)
            gc = np.stack([d_h, d_w], axis=-1).reshape(ctx.inside.shape)
            gc = np.where(ctx.inside, gc, 0.0).astype(g.dtype)
        return gv, gc


# ------------------------------------------------------------ functional API


def add(a, b) -> Tensor:
    return Add.apply(a, b)


def sub(a, b) -> Tensor:
    return Sub.apply(a, b)


def mul(a, b) -> Tensor:
    return Mul.apply(a, b)


def div(a, b) -> Tensor:
    return Div.apply(a, b)


def scale(x, factor: float) -> Tensor:
    return Scale.apply(x, factor=factor)


def relu(x) -> Tensor:
    return ReLU.apply(x)


def sigmoid(x) -> Tensor:
    return Sigmoid.apply(x)


def tanh(x) -> Tensor:
    return Tanh.apply(x)


def log(x) -> Tensor:
    return Log.apply(x)


def clamp(x, lo=None, hi=None) -> Tensor:
    return Clamp.apply(x, lo=lo, hi=hi)


def elementwise(op: str, *args, **kwargs) -> Tensor:
    """Dispatch by name: relu, add, mul, scale, sub, div."""
    table = {"relu": relu, "add": add, "mul": mul, "scale": scale, "sub": sub, "div": div}
    if op not in table:
        raise ValueError(f"unknown elementwise op {op!r}")
    return table[op](*args, **kwargs)


def sum(x, axis=None, keepdims=False) -> Tensor:  # noqa: A001
    return Sum.apply(x, axis=axis, keepdims=keepdims)


def mean(x, axis=None, keepdims=False) -> Tensor:
    return Mean.apply(x, axis=axis, keepdims=keepdims)


def reshape(x, shape) -> Tensor:
    return Reshape.apply(x, shape=tuple(shape))


def transpose(x, axes) -> Tensor:
    return Transpose.apply(x, axes=tuple(axes))


def stack(xs, axis=0) -> Tensor:
    return _Stack.apply(*xs, axis=axis)


def concat(xs, axis=0) -> Tensor:
    return _Concat.apply(*xs, axis=axis)


def matmul(a, b) -> Tensor:
    return MatMul.apply(a, b)


def linear(x, w, b) -> Tensor:
    return Linear.apply(x, w, b)


def l2_normalize(x, eps: float = 1e-8) -> Tensor:
    return L2Normalize.apply(x, eps=eps)


def conv2d(x, kernel, bias, stride: int = 1, padding: str = "same") -> Tensor:
    return Conv2d.apply(x, kernel, bias, stride=stride, padding=padding)


def max_pool2d(x, size: int = 2) -> Tensor:
    return MaxPool2d.apply(x, size=size)


def bilinear_resize(x, out_h: int, out_w: int) -> Tensor:
    return BilinearResize.apply(x, out_h=int(out_h), out_w=int(out_w))


def bilinear_gather(values, coords) -> Tensor:
    return BilinearGather.apply(values, coords)
