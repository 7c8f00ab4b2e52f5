"""AdaMax and the polynomial learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass
class AdaMaxState:
    step: int = 0
    m: dict[int, np.ndarray] = field(default_factory=dict)
    u: dict[int, np.ndarray] = field(default_factory=dict)


def adamax_step(
    params: list[Tensor],
    grads: list[np.ndarray],
    state: AdaMaxState,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    names: list[str] | None = None,
) -> None:
    """One AdaMax update, in place on ``params[i].data``.

    ``u`` tracks ``max(beta2 * u, |g| + eps)``; the step is
    ``lr / (1 - beta1**t) * m / u``.
    """
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            label = names[i] if names else f"param[{i}]"
            bad = int(np.size(g) - np.isfinite(g).sum())
            raise NonFiniteGradient(f"{label}: {bad} non-finite gradient entries at step {state.step + 1}")
    b1, b2 = betas
    state.step += 1
    bias = 1.0 - b1**state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        m = state.m.get(i)
        u = state.u.get(i)
        if m is None:
            m = np.zeros_like(p.data)
            u = np.zeros_like(p.data)
        m = b1 * m + (1.0 - b1) * g
        u = np.maximum(b2 * u, np.abs(g) + eps)
        state.m[i] = m
        state.u[i] = u
        p.data = (p.data - (lr / bias) * m / u).astype(p.data.dtype, copy=False)


class AdaMax:
    def __init__(self, params: list[Tensor], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8, names=None):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.names = names
        self.state = AdaMaxState()

    def step(self, grads: dict[Tensor, np.ndarray], lr: float | None = None) -> None:
        g = [grads.get(p, np.zeros_like(p.data)) for p in self.params]
        adamax_step(self.params, g, self.state, self.lr if lr is None else lr, self.betas, self.eps, self.names)


def poly_lr(base: float, step: int, total: int, power: float = 1.0) -> float:
    """``base * (1 - step / total) ** power``, clamped at zero."""
    frac = min(max(step / max(total, 1), 0.0), 1.0)
    return base * (1.0 - frac) ** power
