"""Parameter containers."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import ops
from .ops import ConvSpec
from .tensor import Tensor


class Module:
    """Walks attributes to find parameters, like a stripped-down torch.nn.Module."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, value in vars(self).items():
            if not key.startswith("_"):
                yield from _walk(value, f"{prefix}{key}")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def n_params(self) -> int:
        return sum(p.data.size for p in self.parameters())


def _walk(value, name: str) -> Iterator[tuple[str, Tensor]]:
    if isinstance(value, Tensor):
        if value.requires_grad:
            yield name, value
    elif isinstance(value, Module):
        yield from value.named_parameters(name + ".")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk(item, f"{name}.{i}")


class Conv2d(Module):
    def __init__(self, spec: ConvSpec, rng: np.random.Generator, dtype=np.float64, gain: float | None = None):
        self.spec = spec
        fan_in = spec.in_channels * 9
        if gain is None:
            gain = np.sqrt(2.0 / (1.0 + ops.LEAKY_SLOPE**2))
        std = gain / np.sqrt(fan_in)
        w = rng.standard_normal((spec.out_channels, spec.in_channels, 3, 3)) * std
        self.weight = Tensor(w, requires_grad=True, dtype=dtype)
        self.bias = Tensor(np.zeros(spec.out_channels), requires_grad=True, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, self.spec)


def conv(cin: int, cout: int, rng, dtype, dilation: int = 1, stride: int = 1, gain=None) -> Conv2d:
    return Conv2d(ConvSpec(cin, cout, dilation=dilation, stride=stride), rng, dtype=dtype, gain=gain)
