"""Stateless forward/backward math for every layer kind.

Each forward returns (output, cache); the matching backward consumes the
cache and returns gradients w.r.t. its inputs (and parameters where they
exist).  All functions accept float32 or float64 and preserve the dtype,
so the same code serves fast training and f64 finite-difference checks.
"""

import numpy as np

from .. import kernels
from ..errors import ConfigurationError


def conv_output_size(size, kernel, stride, pad):
    """floor((size + 2*pad - kernel) / stride) + 1"""
    out = (size + 2 * pad - kernel) // stride + 1
    if out < 1:
        raise ConfigurationError(
            f"window {kernel} exceeds padded input extent {size + 2 * pad}"
        )
    return out


def conv2d_forward(x, weight, bias, stride, pad):
    """Cross-correlation of NCHW input with (F, C, KH, KW) kernels."""
    n, c, h, w = x.shape
    f, cw, kh, kw = weight.shape
    if c != cw:
        raise ConfigurationError(f"input has {c} channels, kernels expect {cw}")
    oh = conv_output_size(h, kh, stride, pad)
    ow = conv_output_size(w, kw, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = kernels.im2col(x, kh, kw, stride, stride)
    out = np.matmul(weight.reshape(f, -1), cols) + bias.reshape(1, f, 1)
    return out.reshape(n, f, oh, ow), (cols, x.shape)


def conv2d_backward(grad_out, cache, weight, stride, pad):
    """Gradients w.r.t. input, weight and bias of conv2d_forward."""
    cols, padded_shape = cache
    n, f = grad_out.shape[:2]
    g = grad_out.reshape(n, f, -1)
    grad_w = np.matmul(g, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
    grad_b = grad_out.sum(axis=(0, 2, 3))
    dcols = np.matmul(weight.reshape(f, -1).T, g)
    kh, kw = weight.shape[2:]
    grad_x = kernels.col2im(
        np.ascontiguousarray(dcols), padded_shape[2], padded_shape[3], kh, kw, stride, stride
    )
    if pad:
        grad_x = grad_x[:, :, pad:-pad, pad:-pad]
    return grad_x, grad_w, grad_b


def relu_forward(x):
    return np.maximum(x, 0), (x > 0)


def relu_backward(grad_out, mask):
    return grad_out * mask


def _lrn_window_sum(x, local_size, transpose=False):
    """Sum over the channel window; transpose=True sums the adjoint window."""
    c = x.shape[1]
    half_lo = (local_size - 1) // 2
    half_hi = local_size - 1 - half_lo
    if transpose:
        half_lo, half_hi = half_hi, half_lo
    padded = np.pad(x, ((0, 0), (half_lo, half_hi), (0, 0), (0, 0)))
    csum = np.cumsum(padded, axis=1)
    csum = np.concatenate([np.zeros_like(csum[:, :1]), csum], axis=1)
    return csum[:, local_size : local_size + c] - csum[:, :c]


def lrn_forward(x, local_size, alpha, beta, k):
    """Across-channel local response normalization: x / (k + a/n * sum x^2)^b."""
    if local_size < 1:
        raise ConfigurationError(f"lrn local_size must be >= 1, got {local_size}")
    sums = _lrn_window_sum(x * x, local_size)
    scale = k + (alpha / local_size) * sums
    out = x * scale ** (-beta)
    return out, (x, scale)


def lrn_backward(grad_out, cache, local_size, alpha, beta, k):
    x, scale = cache
    pow_term = scale ** (-beta)
    inner = grad_out * x * scale ** (-beta - 1.0)
    gathered = _lrn_window_sum(inner, local_size, transpose=True)
    return grad_out * pow_term - (2.0 * alpha * beta / local_size) * x * gathered


def maxpool_forward(x, kernel, stride):
    """Window max with recorded argmax indices for the backward routing."""
    n, c, h, w = x.shape
    conv_output_size(h, kernel, stride, 0)
    conv_output_size(w, kernel, stride, 0)
    out, argmax = kernels.maxpool2d_forward(
        np.ascontiguousarray(x), kernel, kernel, stride, stride
    )
    return out, (argmax, h, w)


def maxpool_backward(grad_out, cache):
    argmax, h, w = cache
    return kernels.maxpool2d_backward(np.ascontiguousarray(grad_out), argmax, h, w)


def roi_pool_forward(feat, rois, bins_h, bins_w, spatial_scale):
    """Pool each ROI of a 1xCxHxW feature map into a fixed-size grid.

    rois is (R, 4) float (x, y, w, h) in input-image coordinates; an empty
    list produces an empty (0, C, bins_h, bins_w) tensor.
    """
    if feat.ndim == 4:
        if feat.shape[0] != 1:
            raise ConfigurationError("roi pooling expects a single-image feature map")
        feat = feat[0]
    c, h, w = feat.shape
    rois = np.asarray(rois, dtype=np.float64).reshape(-1, 4)
    out, argmax = kernels.roi_pool_forward(
        np.ascontiguousarray(feat), np.ascontiguousarray(rois), bins_h, bins_w, spatial_scale
    )
    return out, (argmax, c, h, w)


def roi_pool_backward(grad_out, cache):
    argmax, c, h, w = cache
    grad = kernels.roi_pool_backward(np.ascontiguousarray(grad_out), argmax, c, h, w)
    return grad[None]


def fc_forward(x, weight, bias):
    """Affine map y = x W^T + b for row-major (R, D) inputs."""
    if x.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ConfigurationError(
            f"fc expects (R, {weight.shape[1]}) input, got {x.shape}"
        )
    return x @ weight.T + bias, x


def fc_backward(grad_out, x, weight):
    grad_x = grad_out @ weight
    grad_w = grad_out.T @ x
    grad_b = grad_out.sum(axis=0)
    return grad_x, grad_w, grad_b


def dropout_forward(x, rate, rng):
    """Inverted dropout; scaling at train time keeps inference a no-op."""
    keep = 1.0 - rate
    mask = (rng.random(x.shape) < keep).astype(x.dtype) / keep
    return x * mask, mask


def dropout_backward(grad_out, mask):
    return grad_out * mask


def softmax(x):
    """Row-wise softmax with max subtraction for overflow safety."""
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(grad_out, probs):
    dot = (grad_out * probs).sum(axis=-1, keepdims=True)
    return probs * (grad_out - dot)
