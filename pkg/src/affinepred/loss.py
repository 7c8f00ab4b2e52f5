"""Training objective: block-DCT SATD, multi-scale MSE and a feature loss."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from . import ops
from .nn import Module, conv
from .tensor import ShapeError, Tensor, absolute, add, record, scale, square, sub, tsum

SATD_SIZES = (8, 16, 32)
MSE_SCALES = (1, 2, 4)


@lru_cache(maxsize=8)
def dct_matrix(j: int) -> np.ndarray:
    """Orthonormal DCT-II matrix; row ``k`` is the ``k``-th basis vector."""
    k = np.arange(j)[:, None]
    i = np.arange(j)[None, :]
    d = np.cos(np.pi * (2 * i + 1) * k / (2 * j)) * np.sqrt(2.0 / j)
    d[0] /= np.sqrt(2.0)
    d.setflags(write=False)
    return d


def block_dct2(x: Tensor, j: int) -> Tensor:
    """2-D DCT of every full ``j x j`` block, tiled from the top-left.

    Returns ``(B, C, H//j, W//j, j, j)``; rows/columns that do not fill a
    whole block are dropped.
    """
    if x.ndim != 4:
        raise ShapeError(f"block_dct2: expected 4-D input, got {x.shape}")
    b, c, h, w = x.shape
    nh, nw = h // j, w // j
    if nh == 0 or nw == 0:
        raise ShapeError(f"block_dct2: {x.shape} has no full {j}x{j} block")
    d = dct_matrix(j).astype(x.dtype)
    blocks = x.data[:, :, : nh * j, : nw * j].reshape(b, c, nh, j, nw, j).transpose(0, 1, 2, 4, 3, 5)
    coef = d @ blocks @ d.T

    def grad_fn(g):
        gb = (d.T @ g @ d).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, nh * j, nw * j)
        if nh * j == h and nw * j == w:
            return (np.ascontiguousarray(gb),)
        full = np.zeros(x.shape, dtype=g.dtype)
        full[:, :, : nh * j, : nw * j] = gb
        return (full,)

    return record("block_dct2", np.ascontiguousarray(coef), (x,), grad_fn)


def satd_loss(residual: Tensor, j: int) -> Tensor:
    """Sum over blocks of the entrywise L1 norm of the block DCT."""
    return tsum(absolute(block_dct2(residual, j)))


def downscale(x: Tensor, s: int) -> Tensor:
    if s == 1:
        return x
    _, _, h, w = x.shape
    return ops.bilinear_resize(x, h // s, w // s)


def multiscale_mse(pred: Tensor, target: Tensor, s: int) -> Tensor:
    """Squared L2 distance after bilinear rescaling both patches by ``1/s``."""
    if s not in MSE_SCALES:
        raise ValueError(f"scale must be one of {MSE_SCALES}, got {s}")
    if pred.shape != target.shape:
        raise ShapeError(f"multiscale_mse: {pred.shape} vs {target.shape}")
    return tsum(square(downscale(sub(pred, target), s)))


class ContextExtractor(Module):
    """Frozen, seeded stand-in for a detection backbone: four stride-2 convs."""

    def __init__(self, seed: int = 1234, channels=(16, 32, 32, 32), dtype=np.float64):
        rng = np.random.default_rng(seed)
        self.convs = []
        cin = 3
        for cout in channels:
            layer = conv(cin, cout, rng, dtype, stride=2)
            layer.weight.requires_grad = False
            layer.bias.requires_grad = False
            self.convs.append(layer)
            cin = cout

    def __call__(self, x: Tensor) -> Tensor:
        for c in self.convs:
            x = ops.leaky_relu(c(x))
        return x

    def state(self) -> dict[str, np.ndarray]:
        out = {}
        for i, c in enumerate(self.convs):
            out[f"ctx.{i}.weight"] = c.weight.data
            out[f"ctx.{i}.bias"] = c.bias.data
        return out

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for i, c in enumerate(self.convs):
            c.weight.data = np.array(state[f"ctx.{i}.weight"], dtype=c.weight.dtype)
            c.bias.data = np.array(state[f"ctx.{i}.bias"], dtype=c.bias.dtype)

    def astype(self, dtype) -> "ContextExtractor":
        for c in self.convs:
            c.weight.data = c.weight.data.astype(dtype)
            c.bias.data = c.bias.data.astype(dtype)
        return self


def context_loss(pred: Tensor, target: Tensor, extractor: Callable[[Tensor], Tensor]) -> Tensor:
    fp = extractor(pred)
    ft = extractor(Tensor(target.data) if target.requires_grad else target)
    if fp.shape != ft.shape:
        raise ShapeError(f"context_loss: extractor gave {fp.shape} and {ft.shape}")
    return tsum(square(sub(fp, ft)))


@dataclass(frozen=True)
class LossConfig:
    satd_sizes: tuple[int, ...] = SATD_SIZES
    mse_scales: tuple[int, ...] = MSE_SCALES
    context: bool = True

    @classmethod
    def ablation(cls, name: str) -> "LossConfig":
        """``full``, ``no-satd`` (drop SATD terms) or ``s1-only`` (also drop s=2,4)."""
        variants = {
            "full": cls(),
            "no-satd": cls(satd_sizes=()),
            "s1-only": cls(satd_sizes=(), mse_scales=(1,)),
        }
        return variants[name]


@dataclass
class LossTerms:
    total: Tensor
    parts: dict[str, Tensor] = field(default_factory=dict)


def total_loss(
    pred: Tensor,
    target: Tensor,
    config: LossConfig = LossConfig(),
    extractor: Callable[[Tensor], Tensor] | None = None,
) -> LossTerms:
    """``sum_j SATD_j + sum_s s^2 MSE_s + CTX`` over the enabled terms."""
    if pred.shape != target.shape:
        raise ShapeError(f"total_loss: {pred.shape} vs {target.shape}")
    residual = sub(pred, target)
    parts: dict[str, Tensor] = {}
    for j in config.satd_sizes:
        parts[f"satd{j}"] = satd_loss(residual, j)
    for s in config.mse_scales:
        parts[f"mse{s}"] = scale(tsum(square(downscale(residual, s))), float(s * s))
    if config.context and extractor is not None:
        parts["ctx"] = context_loss(pred, target, extractor)
    if not parts:
        raise ValueError("loss configuration enables no terms")
    total = None
    for p in parts.values():
        total = p if total is None else add(total, p)
    return LossTerms(total, parts)
