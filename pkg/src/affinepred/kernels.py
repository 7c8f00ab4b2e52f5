"""Adaptive separable filter heads and per-pixel 2-D kernels."""

from __future__ import annotations

import numpy as np

from . import ops
from .nn import Module, conv
from .tensor import ShapeError, Tensor, record

FILTER_LENGTH = 8
TAP_ANCHOR = 3  # tap k reads offset k - 3
HEAD_WIDTH = 64


class ASFHead(Module):
    """Four 3x3 conv layers; LeakyReLU on the first three, linear output.

    With ``delta_init`` the output layer starts with small weights and a
    bias of 1 on the anchor tap, so the 2-D kernel begins close to a
    single-tap (nearest sample) filter.
    """

    def __init__(self, in_channels: int, rng, dtype=np.float64, width: int = HEAD_WIDTH,
                 taps: int = FILTER_LENGTH, delta_init: bool = True):
        self.in_channels = in_channels
        self.convs = [
            conv(in_channels, width, rng, dtype),
            conv(width, width, rng, dtype),
            conv(width, width, rng, dtype),
            conv(width, taps, rng, dtype, gain=0.1 if delta_init else 1.0),
        ]
        if delta_init:
            self.convs[-1].bias.data[TAP_ANCHOR] = 1.0

    def __call__(self, features: Tensor) -> Tensor:
        if features.ndim != 4 or features.shape[1] != self.in_channels:
            raise ShapeError(f"asf_head: expected {self.in_channels} feature channels, got {features.shape}")
        x = features
        for c in self.convs[:-1]:
            x = ops.leaky_relu(c(x))
        return self.convs[-1](x)


class FilterBank(Module):
    """Horizontal and vertical filters for both references.

    Calling it returns ``{(d, i): Tensor[B, 8, H, W]}`` for ``d`` in
    ``"h", "v"`` and reference index ``i`` in ``1, 2``.
    """

    KEYS = (("h", 1), ("v", 1), ("h", 2), ("v", 2))

    def __init__(self, in_channels: int, rng, dtype=np.float64, width: int = HEAD_WIDTH, delta_init: bool = True):
        self.heads = [ASFHead(in_channels, rng, dtype, width, delta_init=delta_init) for _ in self.KEYS]

    def __call__(self, features: Tensor) -> dict[tuple[str, int], Tensor]:
        return {key: head(features) for key, head in zip(self.KEYS, self.heads)}


def outer_kernel(f_h: Tensor, f_v: Tensor) -> Tensor:
    """Per-pixel ``K = f_v f_h^T``: ``K[b, r, c, y, x] = f_v[b, r, y, x] * f_h[b, c, y, x]``.

    Row index ``r`` runs vertically, column index ``c`` horizontally.
    """
    if f_h.shape != f_v.shape or f_h.ndim != 4:
        raise ShapeError(f"outer_kernel: shapes {f_h.shape} and {f_v.shape}")
    h, v = f_h.data, f_v.data
    k = v[:, :, None] * h[:, None, :]

    def grad_fn(g):
        gh = np.einsum("brcyx,bryx->bcyx", g, v, optimize=True)
        gv = np.einsum("brcyx,bcyx->bryx", g, h, optimize=True)
        return gh, gv

    return record("outer_kernel", k, (f_h, f_v), grad_fn)
