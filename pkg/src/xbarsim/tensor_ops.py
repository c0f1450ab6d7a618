"""Dense tensor kernels: matmul, im2col lowering, convolution.

Tensors are plain numpy ndarrays in row-major order. Convolutions use the
HWC layout (batched: NHWC); filters are (kh, kw, C, F). A convolution is
lowered to im2col + matmul so that each conv layer maps onto a single
matrix with one column per filter.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError, ShapeError


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product a @ b with explicit shape checking."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions disagree: {a.shape} x {b.shape}")
    return a @ b


def _check_conv_params(kernel, stride, pad):
    kh, kw = kernel
    sh, sw = stride
    ph, pw = pad
    if kh < 1 or kw < 1:
        raise ParameterError(f"kernel must be positive, got {kernel}")
    if sh < 1 or sw < 1:
        raise ParameterError(f"stride must be positive, got {stride}")
    if ph < 0 or pw < 0:
        raise ParameterError(f"padding must be non-negative, got {pad}")
    return kh, kw, sh, sw, ph, pw


def conv_output_hw(in_hw, kernel, stride, pad):
    """Spatial output extent: floor((H + 2p - k) / s) + 1 per axis."""
    kh, kw, sh, sw, ph, pw = _check_conv_params(kernel, stride, pad)
    h, w = in_hw
    if kh > h + 2 * ph or kw > w + 2 * pw:
        raise ShapeError(f"kernel {kernel} larger than padded input {in_hw} + {pad}")
    return (h + 2 * ph - kh) // sh + 1, (w + 2 * pw - kw) // sw + 1


def same_padding(kernel):
    """Symmetric zero padding that preserves ceil(H/s) output for odd kernels."""
    kh, kw = kernel
    if kh % 2 == 0 or kw % 2 == 0:
        raise ParameterError("'same' padding requires odd kernel sizes")
    return (kh - 1) // 2, (kw - 1) // 2


def im2col_batch(x: np.ndarray, kernel, stride=(1, 1), pad=(0, 0)) -> np.ndarray:
    """Unroll batched NHWC input into receptive-field rows.

    Returns (N * H' * W', kh * kw * C); each row is one flattened patch in
    (kh, kw, C) row-major order, matching reshape(filters, (-1, F)).
    """
    x = np.asarray(x)
    if x.ndim != 4:
        raise ShapeError(f"expected NHWC input, got shape {x.shape}")
    kh, kw, sh, sw, ph, pw = _check_conv_params(kernel, stride, pad)
    n, h, w, c = x.shape
    ho, wo = conv_output_hw((h, w), kernel, stride, pad)
    if ph or pw:
        x = np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    # windows land as (N, H*, W*, C, kh, kw); reorder to (kh, kw, C) per patch
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
    win = win[:, ::sh, ::sw]
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, kh * kw * c)
    return np.ascontiguousarray(cols)


def im2col(x: np.ndarray, kernel, stride=(1, 1), pad=(0, 0)) -> np.ndarray:
    """Single-image im2col: (H, W, C) -> (H' * W', kh * kw * C)."""
    x = np.asarray(x)
    if x.ndim != 3:
        raise ShapeError(f"expected HWC input, got shape {x.shape}")
    return im2col_batch(x[None], kernel, stride, pad)


def col2im_batch(cols: np.ndarray, x_shape, kernel, stride=(1, 1), pad=(0, 0)) -> np.ndarray:
    """Adjoint of im2col_batch: scatter-add patch rows back onto NHWC images."""
    kh, kw, sh, sw, ph, pw = _check_conv_params(kernel, stride, pad)
    n, h, w, c = x_shape
    ho, wo = conv_output_hw((h, w), kernel, stride, pad)
    cols = cols.reshape(n, ho, wo, kh, kw, c)
    out = np.zeros((n, h + 2 * ph, w + 2 * pw, c), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, i : i + sh * ho : sh, j : j + sw * wo : sw, :] += cols[:, :, :, i, j, :]
    if ph or pw:
        out = out[:, ph : ph + h, pw : pw + w, :]
    return out


def conv2d(x: np.ndarray, filters: np.ndarray, stride=(1, 1), pad=(0, 0)) -> np.ndarray:
    """2-D convolution of an HWC image with (kh, kw, C, F) filters.

    Equivalent to im2col(x) @ reshape(filters, (-1, F)), reshaped back to
    (H', W', F). Zero padding, no dilation.
    """
    x = np.asarray(x)
    filters = np.asarray(filters)
    if x.ndim != 3 or filters.ndim != 4:
        raise ShapeError(f"expected HWC input and khkwCF filters, got {x.shape}, {filters.shape}")
    kh, kw, c_f, f = filters.shape
    if x.shape[2] != c_f:
        raise ShapeError(f"channel mismatch: input {x.shape[2]}, filters {c_f}")
    ho, wo = conv_output_hw(x.shape[:2], (kh, kw), stride, pad)
    cols = im2col(x, (kh, kw), stride, pad)
    out = matmul(cols, filters.reshape(kh * kw * c_f, f))
    return out.reshape(ho, wo, f)
