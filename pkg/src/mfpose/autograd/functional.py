"""Differentiable layer primitives built on :mod:`mfpose.autograd.tensor`.

Heavy ops (convolutions, normalisations, softmax) are single graph nodes with
hand-written backward passes; everything is NCHW.
"""
from __future__ import annotations

import functools
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from mfpose.autograd.tensor import Tensor, as_tensor, make_op, matmul
from mfpose.errors import DimensionError, UsageError

# --------------------------------------------------------------------------
# pointwise


def relu(x: Tensor) -> Tensor:
    data = x.data
    mask = data > 0
    # np.maximum keeps NaN, so a poisoned input still surfaces in the loss
    return make_op(np.maximum(data, 0).astype(data.dtype, copy=False), (x,),
                   lambda g: (g * mask,))


_SQRT_HALF = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    data = x.data
    cdf = 0.5 * (1.0 + erf(data * _SQRT_HALF))

    def back(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * data * data)
        return (g * (cdf + data * pdf),)

    return make_op(data * cdf, (x,), back)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    data = x.data
    shifted = np.exp(data - data.max(axis=axis, keepdims=True))
    y = shifted / shifted.sum(axis=axis, keepdims=True)

    def back(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make_op(y, (x,), back)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` over the last axis of ``x``."""
    xd, w = x.data, weight.data
    if xd.shape[-1] != w.shape[1]:
        raise DimensionError(f"linear expects last extent {w.shape[1]}, got input {xd.shape}")
    out = xd @ w.T
    if bias is not None:
        out = out + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def back(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = g @ w if x.requires_grad else None
        gw = g2.T @ xd.reshape(-1, xd.shape[-1]) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return make_op(out, parents, back)


# --------------------------------------------------------------------------
# normalisation


def layer_norm(x: Tensor, weight: Tensor | None = None, bias: Tensor | None = None,
               eps: float = 1e-6) -> Tensor:
    """Normalise over the last axis, then apply the optional affine."""
    data = x.data
    mu = data.mean(axis=-1, keepdims=True)
    centred = data - mu
    inv = 1.0 / np.sqrt((centred * centred).mean(axis=-1, keepdims=True) + eps)
    xhat = centred * inv
    out = xhat
    if weight is not None:
        out = out * weight.data
    if bias is not None:
        out = out + bias.data
    parents = [x] + [p for p in (weight, bias) if p is not None]

    def back(g):
        gxhat = g * weight.data if weight is not None else g
        gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                    - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        grads = [gx]
        flat = g.reshape(-1, g.shape[-1])
        if weight is not None:
            grads.append((flat * xhat.reshape(flat.shape)).sum(axis=0))
        if bias is not None:
            grads.append(flat.sum(axis=0))
        return tuple(grads)

    return make_op(out, parents, back)


def batch_norm2d(x: Tensor, weight: Tensor, bias: Tensor, running_mean: np.ndarray,
                 running_var: np.ndarray, training: bool, momentum: float = 0.1,
                 eps: float = 1e-5) -> Tensor:
    """Batch normalisation over (N, H, W) per channel.

    In training mode the running buffers are updated in place (unbiased
    variance, as is conventional); in eval mode they are used as-is.
    """
    data = x.data
    if data.ndim != 4:
        raise DimensionError(f"batch_norm2d expects NCHW, got {data.shape}")
    w = weight.data.reshape(1, -1, 1, 1)
    b = bias.data.reshape(1, -1, 1, 1)
    if not training:
        inv = 1.0 / np.sqrt(running_var.reshape(1, -1, 1, 1) + eps)
        xhat = (data - running_mean.reshape(1, -1, 1, 1)) * inv

        def back_eval(g):
            return g * w * inv, (g * xhat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

        return make_op(xhat * w + b, (x, weight, bias), back_eval)

    if data.shape[0] < 2:
        raise UsageError("batch_norm2d in training mode needs a batch of at least 2")
    n = data.shape[0] * data.shape[2] * data.shape[3]
    mu = data.mean(axis=(0, 2, 3), keepdims=True)
    centred = data - mu
    var = (centred * centred).mean(axis=(0, 2, 3), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centred * inv
    running_mean *= 1.0 - momentum
    running_mean += momentum * mu.reshape(-1)
    running_var *= 1.0 - momentum
    running_var += momentum * var.reshape(-1) * (n / (n - 1))

    def back(g):
        gxhat = g * w
        gx = inv * (gxhat - gxhat.mean(axis=(0, 2, 3), keepdims=True)
                    - xhat * (gxhat * xhat).mean(axis=(0, 2, 3), keepdims=True))
        return gx, (g * xhat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

    return make_op(xhat * w + b, (x, weight, bias), back)


# --------------------------------------------------------------------------
# convolution


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """Patches of a padded NCHW array as rows of shape (B*Ho*Wo, C*kh*kw)."""
    view = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    b, c, ho, wo = view.shape[:4]
    return view.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, c * kh * kw)


def _col2im(cols: np.ndarray, padded_shape: tuple, kh: int, kw: int, stride: int,
            ho: int, wo: int) -> np.ndarray:
    """Adjoint of :func:`_im2col`: scatter-add patch rows back onto the grid."""
    b, c = padded_shape[:2]
    cols = np.ascontiguousarray(cols.reshape(b, ho, wo, c, kh, kw).transpose(4, 5, 0, 3, 1, 2))
    out = np.zeros(padded_shape, dtype=cols.dtype)
    h_span = stride * (ho - 1) + 1
    w_span = stride * (wo - 1) + 1
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + h_span:stride, j:j + w_span:stride] += cols[i, j]
    return out


def _pad(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _crop(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return x[:, :, pad:-pad, pad:-pad]


def conv_output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
           padding: int = 0) -> Tensor:
    """2-D cross-correlation. ``weight`` is (O, C, kh, kw)."""
    xd, w = x.data, weight.data
    if xd.ndim != 4 or w.ndim != 4:
        raise DimensionError(f"conv2d expects 4-D input and weight, got {xd.shape}, {w.shape}")
    bsz, c, h, wd = xd.shape
    o, cw, kh, kw = w.shape
    if c != cw:
        raise DimensionError(f"conv2d channel mismatch: input {xd.shape}, weight {w.shape}")
    ho = conv_output_size(h, kh, stride, padding)
    wo = conv_output_size(wd, kw, stride, padding)
    if ho <= 0 or wo <= 0 or kh > h + 2 * padding or kw > wd + 2 * padding:
        raise DimensionError(f"conv2d output would be empty: input {xd.shape}, kernel {w.shape}, "
                             f"stride {stride}, padding {padding}")
    xp = _pad(xd, padding)
    cols = _im2col(xp, kh, kw, stride)
    wmat = w.reshape(o, -1)
    out = cols @ wmat.T
    if bias is not None:
        out = out + bias.data
    out = out.reshape(bsz, ho, wo, o).transpose(0, 3, 1, 2)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def back(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, o)
        gx = None
        if x.requires_grad:
            gx = _crop(_col2im(g2 @ wmat, xp.shape, kh, kw, stride, ho, wo), padding)
        gw = (g2.T @ cols).reshape(w.shape) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return make_op(np.ascontiguousarray(out), parents, back)


def deconv_output_size(size: int, kernel: int, stride: int, pad: int, output_padding: int) -> int:
    return (size - 1) * stride - 2 * pad + kernel + output_padding


def deconv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 2,
             padding: int = 1, output_padding: int = 0, output_size: tuple | None = None) -> Tensor:
    """Transposed convolution, the adjoint of :func:`conv2d` with the same weight.

    ``weight`` has the conv2d layout (O, C, kh, kw); the input carries O
    channels and the output C channels.
    """
    xd, w = x.data, weight.data
    if xd.ndim != 4 or w.ndim != 4:
        raise DimensionError(f"deconv2d expects 4-D input and weight, got {xd.shape}, {w.shape}")
    bsz, o, h, wd = xd.shape
    ow, c, kh, kw = w.shape
    if o != ow:
        raise DimensionError(f"deconv2d channel mismatch: input {xd.shape}, weight {w.shape}")
    if not 0 <= output_padding < stride:
        raise DimensionError(f"output_padding {output_padding} must be in [0, stride)")
    hout = deconv_output_size(h, kh, stride, padding, output_padding)
    wout = deconv_output_size(wd, kw, stride, padding, output_padding)
    if hout <= 0 or wout <= 0:
        raise DimensionError(f"deconv2d output would be empty for input {xd.shape}")
    if output_size is not None and tuple(output_size) != (hout, wout):
        raise DimensionError(f"deconv2d produces {(hout, wout)}, expected {tuple(output_size)}")
    padded_shape = (bsz, c, hout + 2 * padding, wout + 2 * padding)
    wmat = w.reshape(o, -1)
    x2 = xd.transpose(0, 2, 3, 1).reshape(-1, o)
    out = _crop(_col2im(x2 @ wmat, padded_shape, kh, kw, stride, h, wd), padding)
    if bias is not None:
        out = out + bias.data.reshape(1, -1, 1, 1)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def back(g):
        cols = _im2col(_pad(g, padding), kh, kw, stride)
        gx = None
        if x.requires_grad:
            gx = (cols @ wmat.T).reshape(bsz, h, wd, o).transpose(0, 3, 1, 2)
        gw = (x2.T @ cols).reshape(w.shape) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return make_op(np.ascontiguousarray(out), parents, back)


# --------------------------------------------------------------------------
# resampling: both pooling and bilinear interpolation are separable linear maps


@functools.lru_cache(maxsize=256)
def _pool_matrix(size: int, out: int) -> np.ndarray:
    m = np.zeros((out, size))
    for i in range(out):
        start = (i * size) // out
        end = -((-(i + 1) * size) // out)
        m[i, start:end] = 1.0 / (end - start)
    m.setflags(write=False)
    return m


@functools.lru_cache(maxsize=256)
def _bilinear_matrix(size: int, out: int) -> np.ndarray:
    m = np.zeros((out, size))
    scale = size / out
    for i in range(out):
        src = max((i + 0.5) * scale - 0.5, 0.0)
        i0 = min(int(math.floor(src)), size - 1)
        i1 = min(i0 + 1, size - 1)
        frac = src - i0
        m[i, i0] += 1.0 - frac
        m[i, i1] += frac
    m.setflags(write=False)
    return m


def _separable(x: Tensor, mh: np.ndarray, mw: np.ndarray) -> Tensor:
    mh = mh.astype(x.dtype, copy=False)
    mw = mw.astype(x.dtype, copy=False)
    out = mh @ x.data @ mw.T
    return make_op(out, (x,), lambda g: (mh.T @ g @ mw,))


def adaptive_avg_pool2d(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Mean over bins [floor(i*H/oh), ceil((i+1)*H/oh)) in each axis."""
    if x.ndim != 4:
        raise DimensionError(f"adaptive_avg_pool2d expects NCHW, got {x.shape}")
    h, w = x.shape[2:]
    if out_h <= 0 or out_w <= 0:
        raise DimensionError(f"pool output extents must be positive, got {(out_h, out_w)}")
    if out_h > h or out_w > w:
        raise DimensionError(f"pool output {(out_h, out_w)} larger than input {(h, w)}")
    if (out_h, out_w) == (h, w):
        return x
    return _separable(x, _pool_matrix(h, out_h), _pool_matrix(w, out_w))


def interpolate_bilinear(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear resize with half-pixel centres (align_corners=False)."""
    if x.ndim != 4:
        raise DimensionError(f"interpolate_bilinear expects NCHW, got {x.shape}")
    if out_h < 1 or out_w < 1:
        raise DimensionError(f"interpolation size must be positive, got {(out_h, out_w)}")
    h, w = x.shape[2:]
    return _separable(x, _bilinear_matrix(h, out_h), _bilinear_matrix(w, out_w))


# --------------------------------------------------------------------------
# attention


def scaled_dot_product_attention(q: Tensor, k: Tensor, v: Tensor) -> tuple[Tensor, Tensor]:
    """softmax(q k^T / sqrt(d_k)) v over the last two axes.

    Returns the attended values and the attention weights.
    """
    d_k = q.shape[-1]
    if k.shape[-1] != d_k or k.shape[-2] != v.shape[-2]:
        raise DimensionError(f"attention shapes disagree: q {q.shape}, k {k.shape}, v {v.shape}")
    scores = matmul(q, k.swapaxes(-1, -2)) * (1.0 / math.sqrt(d_k))
    weights = softmax(scores, axis=-1)
    return matmul(weights, v), weights


def mse(pred: Tensor, target) -> Tensor:
    diff = pred - as_tensor(target)
    return (diff * diff).mean()
