"""Differentiable image operators: 3x3 convolution, pooling, resizing, activations.

Resampling everywhere uses half-pixel centres (the ``align_corners=False``
convention): output sample ``i`` of a resize from ``n_in`` to ``n_out`` sits
at source coordinate ``(i + 0.5) * n_in / n_out - 0.5``.  The grid sampler in
:mod:`affinepred.warp` uses the same convention.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .tensor import ShapeError, Tensor, record

LEAKY_SLOPE = 0.1
ALLOWED_DILATIONS = (1, 2, 4)
ALLOWED_STRIDES = (1, 2)


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    dilation: int = 1
    stride: int = 1
    kernel: int = 3

    def __post_init__(self):
        if self.kernel != 3:
            raise ValueError(f"only 3x3 kernels are supported, got {self.kernel}")
        if self.dilation not in ALLOWED_DILATIONS:
            raise ValueError(f"dilation must be one of {ALLOWED_DILATIONS}, got {self.dilation}")
        if self.stride not in ALLOWED_STRIDES:
            raise ValueError(f"stride must be one of {ALLOWED_STRIDES}, got {self.stride}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be positive")
        # stride-1 layers must preserve extent
        if self.out_extent(17) != 17 and self.stride == 1:
            raise ValueError("padding does not preserve extent")

    @property
    def padding(self) -> int:
        return self.dilation

    def out_extent(self, n: int) -> int:
        span = self.dilation * (self.kernel - 1) + 1
        return (n + 2 * self.padding - span) // self.stride + 1

    @property
    def n_params(self) -> int:
        return self.out_channels * (self.in_channels * self.kernel * self.kernel + 1)


def _im2col(xp: np.ndarray, dilation: int, stride: int, oh: int, ow: int) -> np.ndarray:
    """Gather 3x3 taps of padded ``xp`` into a ``(C*9, B*oh*ow)`` matrix."""
    b, c = xp.shape[:2]
    cols = np.empty((c, 9, b, oh, ow), dtype=xp.dtype)
    for ky in range(3):
        for kx in range(3):
            y0, x0 = ky * dilation, kx * dilation
            win = xp[:, :, y0 : y0 + stride * (oh - 1) + 1 : stride, x0 : x0 + stride * (ow - 1) + 1 : stride]
            cols[:, ky * 3 + kx] = win.transpose(1, 0, 2, 3)
    return cols.reshape(c * 9, b * oh * ow)


def _col2im(cols: np.ndarray, shape, dilation: int, stride: int, oh: int, ow: int) -> np.ndarray:
    b, c, hp, wp = shape
    cols = cols.reshape(c, 9, b, oh, ow)
    out = np.zeros((b, c, hp, wp), dtype=cols.dtype)
    for ky in range(3):
        for kx in range(3):
            y0, x0 = ky * dilation, kx * dilation
            out[:, :, y0 : y0 + stride * (oh - 1) + 1 : stride, x0 : x0 + stride * (ow - 1) + 1 : stride] += cols[
                :, ky * 3 + kx
            ].transpose(1, 0, 2, 3)
    return out


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None, spec: ConvSpec) -> Tensor:
    """Zero-padded 3x3 cross-correlation; ``weight`` is ``(Cout, Cin, 3, 3)``."""
    if x.ndim != 4 or x.shape[1] != spec.in_channels:
        raise ShapeError(f"conv2d: input {x.shape} does not have {spec.in_channels} channels")
    if weight.shape != (spec.out_channels, spec.in_channels, 3, 3):
        raise ShapeError(f"conv2d: weight {weight.shape} does not match {spec}")
    if bias is not None and bias.shape != (spec.out_channels,):
        raise ShapeError(f"conv2d: bias {bias.shape} does not match {spec}")
    b, c, h, w = x.shape
    d, s, p = spec.dilation, spec.stride, spec.padding
    oh, ow = spec.out_extent(h), spec.out_extent(w)
    if oh < 1 or ow < 1:
        raise ShapeError(f"conv2d: input {x.shape} too small for {spec}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p)))
    cols = _im2col(xp, d, s, oh, ow)
    w2 = weight.data.reshape(spec.out_channels, -1)
    out = w2 @ cols
    if bias is not None:
        out += bias.data[:, None]
    out = np.ascontiguousarray(out.reshape(spec.out_channels, b, oh, ow).transpose(1, 0, 2, 3))
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def grad_fn(g):
        g2 = g.transpose(1, 0, 2, 3).reshape(spec.out_channels, -1)
        gx = None
        if x.requires_grad:
            gp = _col2im(w2.T @ g2, xp.shape, d, s, oh, ow)
            gx = np.ascontiguousarray(gp[:, :, p : p + h, p : p + w])
        gw = (g2 @ cols.T).reshape(weight.shape) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=1)

    return record("conv2d", out, inputs, grad_fn)


def avg_pool2(x: Tensor) -> Tensor:
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"avg_pool2: extents must be even, got {x.shape}")
    out = x.data.reshape(b, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def grad_fn(g):
        return (np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * 0.25,)

    return record("avg_pool2", out, (x,), grad_fn)


@lru_cache(maxsize=64)
def resize_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Linear map of a 1-D bilinear resize, half-pixel centres, edge clamped."""
    m = np.zeros((n_out, n_in))
    ratio = n_in / n_out
    for i in range(n_out):
        src = max((i + 0.5) * ratio - 0.5, 0.0)
        i0 = min(int(np.floor(src)), n_in - 1)
        i1 = min(i0 + 1, n_in - 1)
        lam = src - i0
        m[i, i0] += 1.0 - lam
        m[i, i1] += lam
    m.setflags(write=False)
    return m


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    _, _, h, w = x.shape
    mh = resize_matrix(h, out_h).astype(x.dtype)
    mw = resize_matrix(w, out_w).astype(x.dtype)
    out = mh @ x.data @ mw.T
    return record("bilinear_resize", out, (x,), lambda g: (mh.T @ g @ mw,))


def bilinear_upsample2(x: Tensor) -> Tensor:
    _, _, h, w = x.shape
    return bilinear_resize(x, 2 * h, 2 * w)


def leaky_relu(x: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    xd = x.data
    factor = np.where(xd > 0, 1.0, slope).astype(xd.dtype)
    return record("leaky_relu", xd * factor, (x,), lambda g: (g * factor,))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return record("tanh", y, (x,), lambda g: (g * (1.0 - y * y),))
