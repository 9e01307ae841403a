"""Dense float64 kernels shared by the ANN forward pass and the SNN step.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 in C order.
Every kernel accepts optional leading batch dimensions.  Reductions are
written with ``np.einsum`` (no BLAS dispatch) and fixed-order loops over
kernel offsets, so a sample produces bit-identical results whether it is
evaluated alone or inside a batch.
"""

import numpy as np

from .errors import DimensionError


def as_tensor(data, shape=None):
    """Return ``data`` as a C-contiguous float64 array, optionally reshaped."""
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if any(s <= 0 for s in shape):
            raise DimensionError(f"shape entries must be positive, got {shape}")
        if int(np.prod(shape)) != arr.size:
            raise DimensionError(f"cannot view {arr.size} values as shape {shape}")
        arr = arr.reshape(shape)
    return arr


def matvec(weights, x, bias=None):
    """``y_i = sum_j w_ij x_j (+ b_i)`` over the last axis of ``x``."""
    weights = np.asarray(weights, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if weights.ndim != 2 or x.ndim < 1 or weights.shape[1] != x.shape[-1]:
        raise DimensionError(
            f"matvec: weights shape {weights.shape} incompatible with input shape {x.shape}"
        )
    y = np.einsum("...j,ij->...i", x, weights)
    if bias is not None:
        bias = np.asarray(bias, dtype=np.float64)
        if bias.shape != (weights.shape[0],):
            raise DimensionError(
                f"matvec: bias shape {bias.shape} does not match weights shape {weights.shape}"
            )
        y = y + bias
    return y


def conv_output_size(size, k, stride, padding):
    return (size + 2 * padding - k) // stride + 1


def _pad(x, padding):
    if padding == 0:
        return x
    widths = [(0, 0)] * (x.ndim - 2) + [(padding, padding), (padding, padding)]
    return np.pad(x, widths, mode="constant", constant_values=0.0)


def conv2d(x, kernels, bias=None, stride=1, padding=0):
    """2-D cross-correlation of ``x[..., C, H, W]`` with ``kernels[F, C, k, k]``."""
    x = np.asarray(x, dtype=np.float64)
    kernels = np.asarray(kernels, dtype=np.float64)
    if stride < 1 or padding < 0:
        raise DimensionError(f"conv2d: invalid stride={stride} / padding={padding}")
    if kernels.ndim != 4 or x.ndim < 3 or kernels.shape[1] != x.shape[-3]:
        raise DimensionError(
            f"conv2d: kernels shape {kernels.shape} incompatible with input shape {x.shape}"
        )
    kh, kw = kernels.shape[2:]
    h, w = x.shape[-2:]
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise DimensionError(
            f"conv2d: kernel {kernels.shape} larger than padded input {x.shape} (padding={padding})"
        )
    ho = conv_output_size(h, kh, stride, padding)
    wo = conv_output_size(w, kw, stride, padding)
    xp = _pad(x, padding)
    out = np.zeros(x.shape[:-3] + (kernels.shape[0], ho, wo))
    for u in range(kh):
        for v in range(kw):
            patch = xp[..., u:u + stride * (ho - 1) + 1:stride, v:v + stride * (wo - 1) + 1:stride]
            out += np.einsum("...chw,fc->...fhw", patch, kernels[:, :, u, v])
    if bias is not None:
        bias = np.asarray(bias, dtype=np.float64)
        if bias.shape != (kernels.shape[0],):
            raise DimensionError(f"conv2d: bias shape {bias.shape} does not match {kernels.shape[0]} filters")
        out += bias[:, None, None]
    return out


def avg_pool2d(x, window, stride=None):
    """Mean over ``window x window`` patches of the last two axes."""
    x = np.asarray(x, dtype=np.float64)
    stride = window if stride is None else stride
    if window < 1 or stride < 1:
        raise DimensionError(f"avg_pool2d: invalid window={window} / stride={stride}")
    if x.ndim < 2:
        raise DimensionError(f"avg_pool2d: input shape {x.shape} has no spatial axes")
    h, w = x.shape[-2:]
    if h < window or w < window:
        raise DimensionError(f"avg_pool2d: window {window} exceeds spatial extent {(h, w)}")
    ho = conv_output_size(h, window, stride, 0)
    wo = conv_output_size(w, window, stride, 0)
    out = np.zeros(x.shape[:-2] + (ho, wo))
    for u in range(window):
        for v in range(window):
            out += x[..., u:u + stride * (ho - 1) + 1:stride, v:v + stride * (wo - 1) + 1:stride]
    return out / (window * window)
