"""Differentiable operations on :class:`~stereo3d.autodiff.tensor.Tensor`.

Every op returns a new Tensor whose backward closure accumulates gradients
into its parents. Convolutions use an im2col/tensordot core shared between
the 2-D and 3-D variants; transposed convolutions are expressed through the
same three kernels (forward, input-gradient, weight-gradient), which keeps
the conv/conv-transpose adjoint pairing exact.
"""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, make_node

LOG_EPS = 1e-12


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward op."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _t(a), _t(b)
    out = a.data + b.data

    def backward(g):
        a.accumulate_grad(_unbroadcast(g, a.shape))
        b.accumulate_grad(_unbroadcast(g, b.shape))

    return make_node(out, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _t(a), _t(b)
    out = a.data - b.data

    def backward(g):
        a.accumulate_grad(_unbroadcast(g, a.shape))
        b.accumulate_grad(_unbroadcast(-g, b.shape))

    return make_node(out, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _t(a), _t(b)
    out = a.data * b.data

    def backward(g):
        a.accumulate_grad(_unbroadcast(g * b.data, a.shape))
        b.accumulate_grad(_unbroadcast(g * a.data, b.shape))

    return make_node(out, (a, b), backward)


def scale(x: Tensor, alpha: float) -> Tensor:
    out = x.data * x.data.dtype.type(alpha)

    def backward(g):
        x.accumulate_grad(g * x.data.dtype.type(alpha))

    return make_node(out, (x,), backward)


def shift(x: Tensor, c: float) -> Tensor:
    """Add a scalar constant, preserving dtype."""
    out = x.data + x.data.dtype.type(c)

    def backward(g):
        x.accumulate_grad(g)

    return make_node(out, (x,), backward)


def square(x: Tensor) -> Tensor:
    out = x.data * x.data

    def backward(g):
        x.accumulate_grad(g * (2.0 * x.data))

    return make_node(out, (x,), backward)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)

    def backward(g):
        x.accumulate_grad(g * (x.data > 0))

    return make_node(out, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    out[~pos] = ex / (1.0 + ex)

    def backward(g):
        x.accumulate_grad(g * out * (1.0 - out))

    return make_node(out, (x,), backward)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values to [lo, hi]; gradient is zero where the clamp engaged."""
    out = np.clip(x.data, lo, hi)

    def backward(g):
        inside = (x.data >= lo) & (x.data <= hi)
        x.accumulate_grad(g * inside)

    return make_node(out, (x,), backward)


def log(x: Tensor) -> Tensor:
    """Natural log, input clipped below at LOG_EPS for stability."""
    clipped = np.maximum(x.data, x.data.dtype.type(LOG_EPS))
    out = np.log(clipped)

    def backward(g):
        gx = np.where(x.data > LOG_EPS, g / clipped, 0.0).astype(x.data.dtype)
        x.accumulate_grad(gx)

    return make_node(out, (x,), backward)


# ---------------------------------------------------------------------------
# reductions / reshaping
# ---------------------------------------------------------------------------

def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            x.accumulate_grad(np.broadcast_to(g, x.shape).astype(x.dtype, copy=True))
            return
        gk = g if keepdims else np.expand_dims(g, axis)
        x.accumulate_grad(np.broadcast_to(gk, x.shape).astype(x.dtype, copy=True))

    return make_node(np.asarray(out), (x,), backward)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = 1
        for a in axes:
            n *= x.shape[a]
    s = sum_(x, axis=axis, keepdims=keepdims)
    return scale(s, 1.0 / n)


def min_reduce(x: Tensor, axis: int | None = None) -> Tensor:
    """Minimum along an axis; gradient flows to the first argmin only."""
    if axis is None:
        idx = int(np.argmin(x.data))
        out = x.data.reshape(-1)[idx]

        def backward(g):
            gx = np.zeros_like(x.data)
            gx.reshape(-1)[idx] = g
            x.accumulate_grad(gx)

        return make_node(np.asarray(out), (x,), backward)

    idx = np.argmin(x.data, axis=axis)
    out = np.take_along_axis(x.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)

    def backward(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        x.accumulate_grad(gx)

    return make_node(out, (x,), backward)


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out = x.data.reshape(shape)

    def backward(g):
        x.accumulate_grad(g.reshape(x.shape))

    return make_node(out, (x,), backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_t(t) for t in tensors]
    ref = tensors[0].shape
    for t in tensors[1:]:
        for d in range(len(ref)):
            if d != axis % len(ref) and t.shape[d] != ref[d]:
                raise ShapeError(
                    f"concat shape mismatch on dim {d}: {t.shape} vs {ref}"
                )
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]

    def backward(g):
        start = 0
        for t, sz in zip(tensors, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(start, start + sz)
            t.accumulate_grad(g[tuple(sl)])
            start += sz

    return make_node(out, tuple(tensors), backward)


def select_batch(x: Tensor, i: int) -> Tensor:
    """Pick item i along dim 0; backward scatters into that slot."""
    out = x.data[i]

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[i] = g
        x.accumulate_grad(gx)

    return make_node(np.ascontiguousarray(out), (x,), backward)


def crop_spatial(x: Tensor, h0: int, h1: int, w0: int, w1: int) -> Tensor:
    """Slice the two trailing spatial dims of an NCHW tensor."""
    out = x.data[:, :, h0:h1, w0:w1]

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[:, :, h0:h1, w0:w1] = g
        x.accumulate_grad(gx)

    return make_node(np.ascontiguousarray(out), (x,), backward)


def pad_reflect2d(x: Tensor, pad_h: tuple[int, int], pad_w: tuple[int, int]) -> Tensor:
    """Reflect-pad the spatial dims of an NCHW tensor (edge not repeated)."""
    _, _, h, w = x.shape
    iy = np.pad(np.arange(h), pad_h, mode="reflect")
    ix = np.pad(np.arange(w), pad_w, mode="reflect")
    out = x.data[:, :, iy[:, None], ix[None, :]]

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, (slice(None), slice(None), iy[:, None], ix[None, :]), g)
        x.accumulate_grad(gx)

    return make_node(out, (x,), backward)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Fully connected layer: [N, In] @ [In, Out] + [Out]."""
    if x.data.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"linear: input {x.shape} incompatible with weight {w.shape}")
    out = x.data @ w.data + b.data

    def backward(g):
        x.accumulate_grad(g @ w.data.T)
        w.accumulate_grad(x.data.T @ g)
        b.accumulate_grad(g.sum(axis=0))

    return make_node(out, (x, w, b), backward)


# ---------------------------------------------------------------------------
# convolution core (dimension-generic im2col)
# ---------------------------------------------------------------------------

def _windows(x: np.ndarray, ks, stride):
    """Sliding-window view [N, C, *out, *ks] over the spatial dims of x."""
    nd = len(ks)
    n, c = x.shape[:2]
    sp = x.shape[2:]
    out = tuple((sp[i] - ks[i]) // stride[i] + 1 for i in range(nd))
    st = x.strides
    shape = (n, c) + out + tuple(ks)
    strides = (
        (st[0], st[1])
        + tuple(st[2 + i] * stride[i] for i in range(nd))
        + tuple(st[2 + i] for i in range(nd))
    )
    return np.lib.stride_tricks.as_strided(x, shape, strides, writeable=False)


def _pad_spatial(x: np.ndarray, pad, extra_high=None):
    nd = x.ndim - 2
    if extra_high is None:
        extra_high = (0,) * nd
    spec = ((0, 0), (0, 0)) + tuple((pad[i], pad[i] + extra_high[i]) for i in range(nd))
    if all(p == (0, 0) for p in spec):
        return x
    return np.pad(x, spec)


def _conv_fwd_core(x: np.ndarray, w: np.ndarray, stride, pad) -> np.ndarray:
    """Cross-correlation: x [N,C,*S], w [K,C,*ks] -> [N,K,*So]."""
    nd = x.ndim - 2
    xp = _pad_spatial(x, pad)
    win = _windows(xp, w.shape[2:], stride)
    ax_x = (1,) + tuple(range(2 + nd, 2 + 2 * nd))
    ax_w = (1,) + tuple(range(2, 2 + nd))
    y = np.tensordot(win, w, axes=(ax_x, ax_w))
    return np.ascontiguousarray(np.moveaxis(y, -1, 1))


def _conv_weight_grad(x: np.ndarray, go: np.ndarray, stride, pad, ks) -> np.ndarray:
    """Gradient w.r.t. the conv kernel: returns [K, C, *ks]."""
    nd = x.ndim - 2
    xp = _pad_spatial(x, pad)
    win = _windows(xp, ks, stride)  # [N, C, *So, *ks]
    ax_win = (0,) + tuple(range(2, 2 + nd))
    ax_go = (0,) + tuple(range(2, 2 + nd))
    gw = np.tensordot(win, go, axes=(ax_win, ax_go))  # [C, *ks, K]
    return np.ascontiguousarray(np.moveaxis(gw, -1, 0))


def _conv_input_grad(go: np.ndarray, w: np.ndarray, stride, pad, in_spatial) -> np.ndarray:
    """Gradient w.r.t. the conv input (also conv-transpose forward).

    go [N,K,*So], w [K,C,*ks] -> [N,C,*in_spatial]. ``in_spatial`` resolves
    stride remainder pixels, which receive zero gradient.
    """
    nd = go.ndim - 2
    ks = w.shape[2:]
    so = go.shape[2:]
    dil_shape = tuple((so[i] - 1) * stride[i] + 1 for i in range(nd))
    god = np.zeros(go.shape[:2] + dil_shape, dtype=go.dtype)
    sl = (slice(None), slice(None)) + tuple(slice(None, None, stride[i]) for i in range(nd))
    god[sl] = go
    base = tuple(ks[i] - 1 - pad[i] for i in range(nd))
    extra = tuple(
        in_spatial[i] + 2 * pad[i] - ks[i] - (so[i] - 1) * stride[i] for i in range(nd)
    )
    for i in range(nd):
        if base[i] < 0 or extra[i] < 0:
            raise ShapeError(
                f"conv input-grad geometry invalid: out {so} ks {tuple(ks)} "
                f"stride {tuple(stride)} pad {tuple(pad)} target {tuple(in_spatial)}"
            )
    godp = _pad_spatial(god, base, extra)
    wf = w[(slice(None), slice(None)) + tuple(slice(None, None, -1) for _ in range(nd))]
    wf = np.ascontiguousarray(np.swapaxes(wf, 0, 1))  # [C, K, *ks]
    return _conv_fwd_core(godp, wf, (1,) * nd, (0,) * nd)


def _norm_tuple(v, nd):
    if isinstance(v, (tuple, list)):
        if len(v) != nd:
            raise ShapeError(f"expected {nd} values, got {v}")
        return tuple(int(i) for i in v)
    return (int(v),) * nd


def _conv(x: Tensor, w: Tensor, b: Tensor, stride, padding, nd: int) -> Tensor:
    stride = _norm_tuple(stride, nd)
    padding = _norm_tuple(padding, nd)
    if x.data.ndim != nd + 2 or w.data.ndim != nd + 2:
        raise ShapeError(f"conv{nd}d: input {x.shape}, kernel {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(
            f"conv{nd}d channel mismatch: input {x.shape} has {x.shape[1]} channels, "
            f"kernel {w.shape} expects {w.shape[1]}"
        )
    for i in range(nd):
        if x.shape[2 + i] + 2 * padding[i] < w.shape[2 + i]:
            raise ShapeError(
                f"conv{nd}d: spatial dim {i} of input {x.shape} too small for "
                f"kernel {w.shape} with padding {padding}"
            )
    out = _conv_fwd_core(x.data, w.data, stride, padding)
    out += b.data.reshape((1, -1) + (1,) * nd)
    ks = w.shape[2:]
    in_spatial = x.shape[2:]

    def backward(g):
        g = np.ascontiguousarray(g)
        x.accumulate_grad(_conv_input_grad(g, w.data, stride, padding, in_spatial))
        w.accumulate_grad(_conv_weight_grad(x.data, g, stride, padding, ks))
        b.accumulate_grad(g.sum(axis=(0,) + tuple(range(2, 2 + nd))))

    return make_node(out, (x, w, b), backward)


def _conv_transpose(x: Tensor, w: Tensor, b: Tensor, stride, padding, output_padding, nd: int) -> Tensor:
    stride = _norm_tuple(stride, nd)
    padding = _norm_tuple(padding, nd)
    output_padding = _norm_tuple(output_padding, nd)
    if x.data.ndim != nd + 2 or w.data.ndim != nd + 2:
        raise ShapeError(f"conv_transpose{nd}d: input {x.shape}, kernel {w.shape}")
    if x.shape[1] != w.shape[0]:
        raise ShapeError(
            f"conv_transpose{nd}d channel mismatch: input {x.shape} has {x.shape[1]} "
            f"channels, kernel {w.shape} expects {w.shape[0]}"
        )
    for i in range(nd):
        if output_padding[i] >= stride[i]:
            raise ShapeError(f"output_padding {output_padding} must be < stride {stride}")
    ks = w.shape[2:]
    out_spatial = tuple(
        (x.shape[2 + i] - 1) * stride[i] - 2 * padding[i] + ks[i] + output_padding[i]
        for i in range(nd)
    )
    out = _conv_input_grad(x.data, w.data, stride, padding, out_spatial)
    out += b.data.reshape((1, -1) + (1,) * nd)

    def backward(g):
        g = np.ascontiguousarray(g)
        x.accumulate_grad(_conv_fwd_core(g, w.data, stride, padding))
        w.accumulate_grad(_conv_weight_grad(g, x.data, stride, padding, ks))
        b.accumulate_grad(g.sum(axis=(0,) + tuple(range(2, 2 + nd))))

    return make_node(out, (x, w, b), backward)


def conv2d(x, w, b, stride=1, padding=0) -> Tensor:
    """2-D convolution, x [N,C,H,W], w [K,C,kh,kw], b [K]."""
    return _conv(x, w, b, stride, padding, 2)


def conv3d(x, w, b, stride=1, padding=0) -> Tensor:
    """3-D convolution, x [N,C,D,H,W], w [K,C,kd,kh,kw], b [K]."""
    return _conv(x, w, b, stride, padding, 3)


def conv_transpose2d(x, w, b, stride=1, padding=0, output_padding=0) -> Tensor:
    """2-D transposed convolution, w [C_in,C_out,kh,kw]."""
    return _conv_transpose(x, w, b, stride, padding, output_padding, 2)


def conv_transpose3d(x, w, b, stride=1, padding=0, output_padding=0) -> Tensor:
    """3-D transposed convolution, w [C_in,C_out,kd,kh,kw]."""
    return _conv_transpose(x, w, b, stride, padding, output_padding, 3)


# ---------------------------------------------------------------------------
# batch normalization
# ---------------------------------------------------------------------------

def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Channel-wise batch norm (channel = dim 1).

    Train mode normalizes with batch statistics and updates the running
    buffers in place; eval mode uses the running buffers only, so the output
    is independent of batch composition. A zero-variance channel is handled
    by the epsilon.
    """
    nd = x.data.ndim
    if gamma.shape != (x.shape[1],):
        raise ShapeError(f"batch_norm: gamma {gamma.shape} vs channels {x.shape[1]}")
    axes = (0,) + tuple(range(2, nd))
    shape = (1, x.shape[1]) + (1,) * (nd - 2)
    dt = x.data.dtype

    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        n = x.data.size // x.shape[1]
        unbiased = var * (n / (n - 1)) if n > 1 else var
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu.astype(running_mean.dtype)
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased.astype(running_var.dtype)
        invstd = 1.0 / np.sqrt(var + dt.type(eps))
        xhat = (x.data - mu.reshape(shape)) * invstd.reshape(shape)
        out = gamma.data.reshape(shape) * xhat + beta.data.reshape(shape)

        def backward(g):
            gamma.accumulate_grad((g * xhat).sum(axis=axes))
            beta.accumulate_grad(g.sum(axis=axes))
            dxhat = g * gamma.data.reshape(shape)
            t1 = dxhat.sum(axis=axes, keepdims=True)
            t2 = (dxhat * xhat).sum(axis=axes, keepdims=True)
            gx = (invstd.reshape(shape) / n) * (n * dxhat - t1 - xhat * t2)
            x.accumulate_grad(gx.astype(dt))

        return make_node(out, (x, gamma, beta), backward)

    invstd = (1.0 / np.sqrt(running_var + eps)).astype(dt)
    xhat = (x.data - running_mean.reshape(shape).astype(dt)) * invstd.reshape(shape)
    out = gamma.data.reshape(shape) * xhat + beta.data.reshape(shape)

    def backward(g):
        gamma.accumulate_grad((g * xhat).sum(axis=axes))
        beta.accumulate_grad(g.sum(axis=axes))
        x.accumulate_grad(g * (gamma.data * invstd).reshape(shape))

    return make_node(out, (x, gamma, beta), backward)
