"""Three-stream GridNet that merges the four warped patches."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .nn import Module, conv
from .tensor import ShapeError, Tensor, add, concat

_KAIMING = np.sqrt(2.0 / (1.0 + ops.LEAKY_SLOPE**2))
# Init scales; summed streams otherwise grow several-fold per column.
BRANCH_GAIN = 0.1 * _KAIMING
CROSS_GAIN = 0.5 * _KAIMING
EXIT_GAIN = 0.1


@dataclass(frozen=True)
class GridNetConfig:
    in_channels: int = 12
    out_channels: int = 3
    row_channels: tuple[int, int, int] = (32, 48, 64)
    columns: int = 6

    def __post_init__(self):
        if len(self.row_channels) != 3:
            raise ValueError("GridNet has exactly three rows")
        if self.columns < 2 or self.columns % 2:
            raise ValueError("columns must be a positive even number")

    def scaled(self, width: float) -> "GridNetConfig":
        rows = tuple(max(4, int(round(c * width))) for c in self.row_channels)
        return GridNetConfig(self.in_channels, self.out_channels, rows, self.columns)


class Lateral(Module):
    """conv -> LeakyReLU -> conv with an identity skip.

    The branch's second conv starts at a tenth of the usual scale so that a
    chain of residual blocks does not grow activations at initialisation.
    """

    def __init__(self, ch: int, rng, dtype):
        self.conv1 = conv(ch, ch, rng, dtype)
        self.conv2 = conv(ch, ch, rng, dtype, gain=BRANCH_GAIN)

    def __call__(self, x: Tensor) -> Tensor:
        return add(x, self.conv2(ops.leaky_relu(self.conv1(x))))


class Down(Module):
    def __init__(self, cin: int, cout: int, rng, dtype):
        self.conv = conv(cin, cout, rng, dtype, stride=2, gain=CROSS_GAIN)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.leaky_relu(self.conv(x))


class Up(Module):
    def __init__(self, cin: int, cout: int, rng, dtype):
        self.conv = conv(cin, cout, rng, dtype, gain=CROSS_GAIN)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.leaky_relu(self.conv(ops.bilinear_upsample2(x)))


class _Plain(Module):
    """Two convs without skip, used where channel counts change (entry/exit)."""

    def __init__(self, cin: int, mid: int, cout: int, rng, dtype, linear_out: bool):
        self.conv1 = conv(cin, mid, rng, dtype)
        self.conv2 = conv(mid, cout, rng, dtype, gain=EXIT_GAIN if linear_out else None)
        self.linear_out = linear_out

    def __call__(self, x: Tensor) -> Tensor:
        y = self.conv2(ops.leaky_relu(self.conv1(x)))
        return y if self.linear_out else ops.leaky_relu(y)


class GridNet(Module):
    """Rows at full, half and quarter resolution.

    Column 0 enters row 0 and pushes down; columns ``1 .. C/2-1`` add
    lateral and downward paths; columns ``C/2 .. C-1`` add lateral and
    upward paths.  The output is read from row 0 of the last column.
    """

    def __init__(self, config: GridNetConfig, rng, dtype=np.float64):
        self.config = config
        r0, r1, r2 = config.row_channels
        half = config.columns // 2
        self.entry = _Plain(config.in_channels, r0, r0, rng, dtype, linear_out=False)
        self.exit = _Plain(r0, r0, config.out_channels, rng, dtype, linear_out=True)
        self.lateral = [[Lateral(ch, rng, dtype) for _ in range(config.columns - 1)] for ch in (r0, r1, r2)]
        self.down = [[Down(r0, r1, rng, dtype), Down(r1, r2, rng, dtype)] for _ in range(half)]
        self.up = [[Up(r2, r1, rng, dtype), Up(r1, r0, rng, dtype)] for _ in range(half)]

    def __call__(self, stack: Tensor) -> Tensor:
        if stack.ndim != 4 or stack.shape[1] != self.config.in_channels:
            raise ShapeError(f"gridnet: expected {self.config.in_channels} input channels, got {stack.shape}")
        if stack.shape[2] % 4 or stack.shape[3] % 4:
            raise ShapeError(f"gridnet: extents must be divisible by 4, got {stack.shape[2:]}")
        half = self.config.columns // 2
        lat = self.lateral
        x0 = self.entry(stack)
        x1 = self.down[0][0](x0)
        x2 = self.down[0][1](x1)
        for col in range(1, half):
            x0 = lat[0][col - 1](x0)
            x1 = add(lat[1][col - 1](x1), self.down[col][0](x0))
            x2 = add(lat[2][col - 1](x2), self.down[col][1](x1))
        for j, col in enumerate(range(half, self.config.columns)):
            x2 = lat[2][col - 1](x2)
            x1 = add(lat[1][col - 1](x1), self.up[j][0](x2))
            x0 = add(lat[0][col - 1](x0), self.up[j][1](x1))
        return self.exit(x0)


def synthesize(net: GridNet, v1: Tensor, v2: Tensor, b1: Tensor, b2: Tensor) -> Tensor:
    shapes = {v1.shape, v2.shape, b1.shape, b2.shape}
    if len(shapes) != 1:
        raise ShapeError(f"synthesize: warped patches differ in shape: {sorted(shapes)}")
    return net(concat([v1, v2, b1, b2], axis=1))
