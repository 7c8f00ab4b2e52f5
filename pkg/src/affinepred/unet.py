"""Light U-Net with dilated convolutions (three depths, five 3x3 layers each)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .nn import Module, conv
from .tensor import ShapeError, Tensor, add

# (channels, dilation) per layer; the right side mirrors the left.
TABLE_I = {
    1: ((32, 1), (32, 1), (64, 2), (96, 4), (32, 1)),
    2: ((64, 1), (64, 1), (96, 2), (128, 4), (64, 1)),
    3: ((96, 1), (96, 1), (128, 2), (160, 4), (96, 1)),
}

STAGES = ("1L", "2L", "3L", "3R", "2R", "1R")
# Downscale factor of each stage's input relative to the patch.
STAGE_SCALE = {"1L": 1, "2L": 2, "3L": 4, "3R": 8, "2R": 4, "1R": 2}


def _scale(c: int, width: float) -> int:
    return max(4, int(round(c * width)))


@dataclass(frozen=True)
class UNetConfig:
    input_channels: int = 6
    output_channels: int = 64
    depths: dict = field(default_factory=lambda: dict(TABLE_I))
    width: float = 1.0

    def layers(self, depth: int) -> tuple[tuple[int, int], ...]:
        return tuple((_scale(c, self.width), d) for c, d in self.depths[depth])

    @property
    def out_channels(self) -> int:
        return _scale(self.output_channels, self.width)

    def stage_input_channels(self) -> dict[str, int]:
        last = {k: self.layers(k)[-1][0] for k in (1, 2, 3)}
        return {
            "1L": self.input_channels,
            "2L": last[1],
            "3L": last[2],
            "3R": last[3],
            "2R": last[3],
            "1R": last[2],
        }

    def undilated(self) -> "UNetConfig":
        plain = {k: tuple((c, 1) for c, _ in v) for k, v in self.depths.items()}
        return UNetConfig(self.input_channels, self.output_channels, plain, self.width)


def receptive_field(config: UNetConfig = UNetConfig()) -> dict[str, int]:
    """Per-stage receptive field in input pixels.

    A stage's five layers span ``1 + sum(2 * dilation)`` samples at its own
    resolution; pooling multiplies that by the stage's downscale factor.
    """
    out = {}
    for stage in STAGES:
        depth = int(stage[0])
        local = 1 + sum(2 * d for _, d in config.depths[depth])
        out[stage] = local * STAGE_SCALE[stage]
    return out


def cumulative_receptive_field(config: UNetConfig = UNetConfig()) -> dict[str, int]:
    """Receptive field of each stage's output through the whole path so far."""
    rf, jump = 1, 1
    out = {}
    for stage in STAGES:
        depth = int(stage[0])
        if stage in ("2L", "3L", "3R"):
            rf += jump  # 2x2 average pool
            jump *= 2
        elif stage in ("2R", "1R"):
            jump //= 2
        for _, d in config.depths[depth]:
            rf += 2 * d * jump
        out[stage] = rf
    return out


class _Stage(Module):
    def __init__(self, cin: int, layers, rng, dtype):
        self.convs = []
        for cout, dil in layers:
            self.convs.append(conv(cin, cout, rng, dtype, dilation=dil))
            cin = cout

    def __call__(self, x: Tensor) -> Tensor:
        for c in self.convs:
            x = ops.leaky_relu(c(x))
        return x


class LightUNet(Module):
    """Encoder/decoder with additive skips; output has the input's extent.

    Stage inputs: 1L at W, 2L at W/2, 3L at W/4, 3R at W/8, 2R at W/4,
    1R at W/2.  Decoder stages are followed by bilinear x2 upsampling and
    addition of the matching encoder output; a final conv lifts 1R's
    channels to the output feature width at full resolution.
    """

    def __init__(self, config: UNetConfig, rng: np.random.Generator, dtype=np.float64):
        self.config = config
        cin = config.stage_input_channels()
        self.stages = [_Stage(cin[s], config.layers(int(s[0])), rng, dtype) for s in STAGES]
        self.head = conv(config.layers(1)[-1][0], config.out_channels, rng, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.config.input_channels:
            raise ShapeError(f"unet: expected (B,{self.config.input_channels},H,W), got {x.shape}")
        if x.shape[2] % 8 or x.shape[3] % 8:
            raise ShapeError(f"unet: patch extents must be divisible by 8, got {x.shape[2:]}")
        d1l, d2l, d3l, d3r, d2r, d1r = self.stages
        e1 = d1l(x)
        e2 = d2l(ops.avg_pool2(e1))
        e3 = d3l(ops.avg_pool2(e2))
        y = d3r(ops.avg_pool2(e3))
        y = d2r(add(ops.bilinear_upsample2(y), e3))
        y = d1r(add(ops.bilinear_upsample2(y), e2))
        y = add(ops.bilinear_upsample2(y), e1)
        return ops.leaky_relu(self.head(y))
