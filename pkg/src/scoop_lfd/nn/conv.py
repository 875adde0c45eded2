"""2D convolution and transposed convolution primitives.

Forward passes use im2col + one BLAS matmul; backward passes reuse the
column buffers, so each op is a single graph node with a hand-derived
gradient.  Layouts follow the (N, C, H, W) convention.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from scoop_lfd.errors import ShapeMismatchError
from scoop_lfd.nn.tensor import Tensor


def conv2d_output_hw(h: int, w: int, kernel: int, stride: int, pad: int) -> tuple[int, int]:
    ho = (h + 2 * pad - kernel) // stride + 1
    wo = (w + 2 * pad - kernel) // stride + 1
    return ho, wo


def deconv2d_output_hw(h: int, w: int, kernel: int, stride: int, pad: int, out_pad: int) -> tuple[int, int]:
    ho = (h - 1) * stride - 2 * pad + kernel + out_pad
    wo = (w - 1) * stride - 2 * pad + kernel + out_pad
    return ho, wo


def _im2col(xp: np.ndarray, kernel: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """(N, C, Hp, Wp) -> (N*Ho*Wo, C*k*k) column matrix."""
    n, c = xp.shape[:2]
    win = sliding_window_view(xp, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride]
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * kernel * kernel)


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    if x.data.ndim != 4:
        raise ShapeMismatchError(f"conv2d expects (N, C, H, W) input, got {x.data.shape}")
    n, c_in, h, wd = x.data.shape
    c_out, c_in_w, kh, kw = w.data.shape
    if c_in_w != c_in or kh != kw:
        raise ShapeMismatchError(f"conv2d weight {w.data.shape} incompatible with input {x.data.shape}")
    k = kh
    ho, wo = conv2d_output_hw(h, wd, k, stride, pad)
    if ho < 1 or wo < 1:
        raise ShapeMismatchError(f"conv2d output would be empty for input {x.data.shape}, kernel {k}, stride {stride}, pad {pad}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    cols = _im2col(xp, k, stride, ho, wo)
    wm = w.data.reshape(c_out, -1)
    out = cols @ wm.T + b.data
    out_data = np.ascontiguousarray(out.reshape(n, ho, wo, c_out).transpose(0, 3, 1, 2))

    def bwd(g):
        gm = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * ho * wo, c_out)
        if w.requires_grad:
            w._accumulate((gm.T @ cols).reshape(w.data.shape))
        if b.requires_grad:
            b._accumulate(gm.sum(axis=0))
        if x.requires_grad:
            dcols = (gm @ wm).reshape(n, ho, wo, c_in, k, k).transpose(0, 3, 1, 2, 4, 5)
            hp, wp = xp.shape[2], xp.shape[3]
            dxp = np.zeros((n, c_in, hp, wp), dtype=g.dtype)
            for i in range(k):
                for j in range(k):
                    dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += dcols[:, :, :, :, i, j]
            x._accumulate(dxp[:, :, pad:pad + h, pad:pad + wd])

    return Tensor._from_op(out_data, (x, w, b), bwd)


def deconv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, pad: int = 0, out_pad: int = 0) -> Tensor:
    if x.data.ndim != 4:
        raise ShapeMismatchError(f"deconv2d expects (N, C, H, W) input, got {x.data.shape}")
    n, c_in, h, wd = x.data.shape
    c_in_w, c_out, kh, kw = w.data.shape
    if c_in_w != c_in or kh != kw:
        raise ShapeMismatchError(f"deconv2d weight {w.data.shape} incompatible with input {x.data.shape}")
    if not 0 <= out_pad < stride and out_pad != 0:
        raise ShapeMismatchError(f"deconv2d output padding {out_pad} must lie in [0, stride)")
    k = kh
    ho, wo = deconv2d_output_hw(h, wd, k, stride, pad, out_pad)
    if ho < 1 or wo < 1:
        raise ShapeMismatchError(f"deconv2d output would be empty for input {x.data.shape}")

    hf = max((h - 1) * stride + k, pad + ho)
    wf = max((wd - 1) * stride + k, pad + wo)
    xm = np.ascontiguousarray(x.data.transpose(0, 2, 3, 1)).reshape(n * h * wd, c_in)
    wm = w.data.reshape(c_in, -1)
    prod = (xm @ wm).reshape(n, h, wd, c_out, k, k).transpose(0, 3, 1, 2, 4, 5)
    buf = np.zeros((n, c_out, hf, wf), dtype=x.data.dtype)
    for i in range(k):
        for j in range(k):
            buf[:, :, i:i + stride * h:stride, j:j + stride * wd:stride] += prod[:, :, :, :, i, j]
    out_data = np.ascontiguousarray(buf[:, :, pad:pad + ho, pad:pad + wo]) + b.data[None, :, None, None]

    def bwd(g):
        if b.requires_grad:
            b._accumulate(g.sum(axis=(0, 2, 3)))
        gbuf = np.zeros((n, c_out, hf, wf), dtype=g.dtype)
        gbuf[:, :, pad:pad + ho, pad:pad + wo] = g
        dprod = np.empty((n, c_out, h, wd, k, k), dtype=g.dtype)
        for i in range(k):
            for j in range(k):
                dprod[:, :, :, :, i, j] = gbuf[:, :, i:i + stride * h:stride, j:j + stride * wd:stride]
        dpm = np.ascontiguousarray(dprod.transpose(0, 2, 3, 1, 4, 5)).reshape(n * h * wd, c_out * k * k)
        if w.requires_grad:
            w._accumulate((xm.T @ dpm).reshape(w.data.shape))
        if x.requires_grad:
            dxm = dpm @ wm.T
            x._accumulate(np.ascontiguousarray(dxm.reshape(n, h, wd, c_in).transpose(0, 3, 1, 2)))

    return Tensor._from_op(out_data, (x, w, b), bwd)
