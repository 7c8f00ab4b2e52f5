"""Per-pixel affine motion: scale + translation head, grid generator, coordinates.

Coordinate convention (shared by every sampler in the package): normalized
coordinate ``-1`` is the outer edge of the first pixel and ``+1`` the outer
edge of the last, so pixel centre ``x`` sits at ``(2x + 1) / W - 1``.  The
sampling field ``S`` gathers: output pixel ``(x, y)`` reads the reference at
``S(x, y)``.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import ops
from .nn import Module, conv
from .tensor import ShapeError, Tensor, record

N_AFFINE = 3
_SNAP = 1e-9


def base_grid(height: int, width: int, dtype=np.float64) -> np.ndarray:
    """``(2, H, W)`` normalized pixel-centre coordinates, horizontal first."""
    gx = (2.0 * np.arange(width) + 1.0) / width - 1.0
    gy = (2.0 * np.arange(height) + 1.0) / height - 1.0
    g = np.empty((2, height, width), dtype=dtype)
    g[0] = gx[None, :]
    g[1] = gy[:, None]
    return g


def normalize(n, extent: int):
    return (2.0 * np.asarray(n) + 1.0) / extent - 1.0


def unnormalize(s, extent: int) -> np.ndarray:
    """Normalized coordinate to pixel units along an axis of ``extent`` pixels.

    Values within 1e-9 of an integer are snapped to it so that an identity
    grid floors to the source pixel exactly.
    """
    n = ((np.asarray(s, dtype=np.float64) + 1.0) * extent - 1.0) * 0.5
    r = np.rint(n)
    return np.where(np.abs(n - r) < _SNAP, r, n)


def affine_matrix(theta) -> np.ndarray:
    """The 2x3 matrix ``[[t1, 0, t2], [0, t1, t3]]`` for one parameter triple."""
    t1, t2, t3 = (float(v) for v in theta)
    return np.array([[t1, 0.0, t2], [0.0, t1, t3]])


class AffineHead(Module):
    """Same layout as the filter heads with Tanh in place of LeakyReLU.

    The output layer is Tanh as well, so every parameter lies in (-1, 1).
    With ``scale_init`` set, the output layer starts at zero weights and a
    bias that puts the field at ``(scale_init, 0, 0)``.
    """

    def __init__(self, in_channels: int, rng, dtype=np.float64, width: int = 64, scale_init: float | None = 0.99):
        self.in_channels = in_channels
        self.convs = [
            conv(in_channels, width, rng, dtype, gain=1.0),
            conv(width, width, rng, dtype, gain=1.0),
            conv(width, width, rng, dtype, gain=1.0),
            conv(width, N_AFFINE, rng, dtype, gain=1.0),
        ]
        if scale_init is not None:
            last = self.convs[-1]
            last.weight.data[...] = 0.0
            last.bias.data[...] = (np.arctanh(scale_init), 0.0, 0.0)

    def __call__(self, features: Tensor) -> Tensor:
        if features.ndim != 4 or features.shape[1] != self.in_channels:
            raise ShapeError(f"affine_head: expected {self.in_channels} feature channels, got {features.shape}")
        x = features
        for c in self.convs:
            x = ops.tanh(c(x))
        return x


def grid_generate(theta: Tensor) -> Tensor:
    """``S = A(theta) [G0; G1; 1]`` at every pixel; ``theta`` is ``(B, 3, H, W)``."""
    if theta.ndim != 4 or theta.shape[1] != N_AFFINE:
        raise ShapeError(f"grid_generate: expected (B,3,H,W), got {theta.shape}")
    _, _, h, w = theta.shape
    g = base_grid(h, w, theta.dtype)
    t = theta.data
    s = np.empty((t.shape[0], 2, h, w), dtype=t.dtype)
    s[:, 0] = t[:, 0] * g[0] + t[:, 1]
    s[:, 1] = t[:, 0] * g[1] + t[:, 2]

    def grad_fn(gs):
        gt = np.empty_like(t)
        gt[:, 0] = gs[:, 0] * g[0] + gs[:, 1] * g[1]
        gt[:, 1] = gs[:, 0]
        gt[:, 2] = gs[:, 1]
        return (gt,)

    return record("grid_generate", s, (theta,), grad_fn)


def displacement_pixels(s: np.ndarray) -> np.ndarray:
    """Per-pixel sampling displacement ``S - G`` converted to pixels, ``(B, 2, H, W)``."""
    s = np.asarray(s)
    _, _, h, w = s.shape
    g = base_grid(h, w)
    d = np.empty(s.shape, dtype=np.float64)
    d[:, 0] = (s[:, 0] - g[0]) * (w / 2.0)
    d[:, 1] = (s[:, 1] - g[1]) * (h / 2.0)
    return d


def dump_motion(path, s: np.ndarray) -> None:
    """Write ``dx`` then ``dy`` planes (pixels, float32 little-endian) of the first batch item."""
    d = displacement_pixels(s)[0].astype("<f4")
    Path(path).write_bytes(d[0].tobytes() + d[1].tobytes())
