"""The complete frame predictor: two light U-Nets, heads, warps, GridNet."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from . import weights as wio
from .affine import AffineHead, grid_generate
from .gridnet import GridNet, GridNetConfig
from .kernels import HEAD_WIDTH, FilterBank, outer_kernel
from .nn import Module
from .tensor import ShapeError, Tensor, concat
from .unet import LightUNet, UNetConfig
from .warp import bilinear_sample, mclc

DIRECTIONS = ("uni", "bi")


@dataclass(frozen=True)
class ModelConfig:
    width: float = 1.0
    affine_scale_init: float | None = 0.99
    asf_delta_init: bool = True
    direction: str = "bi"
    dtype: str = "float64"
    seed: int = 0

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    @property
    def unet(self) -> UNetConfig:
        return UNetConfig(width=self.width)

    @property
    def gridnet(self) -> GridNetConfig:
        return GridNetConfig().scaled(self.width)

    @property
    def head_width(self) -> int:
        return max(4, int(round(HEAD_WIDTH * self.width)))


class Prediction(NamedTuple):
    output: Tensor
    theta: tuple[Tensor, Tensor]
    grids: tuple[Tensor, Tensor]
    filters: dict
    mclc: tuple[Tensor, Tensor]
    bilinear: tuple[Tensor, Tensor]


class FramePredictor(Module):
    def __init__(self, config: ModelConfig = ModelConfig()):
        self.config = config
        dtype = np.dtype(config.dtype)
        rng = np.random.default_rng(config.seed)
        feat = config.unet.out_channels
        self.kernel_unet = LightUNet(config.unet, rng, dtype)
        self.affine_unet = LightUNet(config.unet, rng, dtype)
        self.filters = FilterBank(feat, rng, dtype, config.head_width, config.asf_delta_init)
        self.affine = [
            AffineHead(feat, rng, dtype, config.head_width, config.affine_scale_init) for _ in range(2)
        ]
        self.synthesis = GridNet(config.gridnet, rng, dtype)

    @property
    def dtype(self):
        return np.dtype(self.config.dtype)

    def forward(self, p1: Tensor, p2: Tensor) -> Prediction:
        if p1.shape != p2.shape or p1.ndim != 4 or p1.shape[1] != 3:
            raise ShapeError(f"predictor: patches must both be (B,3,H,W), got {p1.shape} and {p2.shape}")
        x = concat([p1, p2], axis=1)
        kfeat = self.kernel_unet(x)
        afeat = self.affine_unet(x)
        banks = self.filters(kfeat)
        thetas = tuple(head(afeat) for head in self.affine)
        grids = tuple(grid_generate(t) for t in thetas)
        vs, bs = [], []
        for i, (patch, grid) in enumerate(zip((p1, p2), grids), start=1):
            k = outer_kernel(banks[("h", i)], banks[("v", i)])
            vs.append(mclc(patch, k, grid))
            bs.append(bilinear_sample(patch, grid))
        out = self.synthesis(concat([vs[0], vs[1], bs[0], bs[1]], axis=1))
        return Prediction(out, thetas, grids, banks, tuple(vs), tuple(bs))

    def __call__(self, p1: Tensor, p2: Tensor) -> Tensor:
        return self.forward(p1, p2).output

    def predict(self, p1: np.ndarray, p2: np.ndarray) -> np.ndarray:
        """Numpy in, numpy out; accepts ``(3,H,W)`` or ``(B,3,H,W)`` arrays."""
        single = np.ndim(p1) == 3
        a = np.asarray(p1, dtype=self.dtype)
        b = np.asarray(p2, dtype=self.dtype)
        if single:
            a, b = a[None], b[None]
        out = self(Tensor(a), Tensor(b)).data
        return out[0] if single else out

    # -- persistence

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise KeyError(f"state mismatch: missing={sorted(missing)[:5]} unexpected={sorted(extra)[:5]}")
        for name, p in params.items():
            if state[name].shape != p.shape:
                raise ShapeError(f"{name}: stored {state[name].shape}, model {p.shape}")
            p.data = np.array(state[name], dtype=p.dtype)

    def metadata(self) -> dict[str, str]:
        meta = {f"model.{k}": str(v) for k, v in asdict(self.config).items()}
        meta["direction"] = self.config.direction
        return meta

    def save(self, path, extra: dict[str, np.ndarray] | None = None, meta: dict[str, str] | None = None) -> bytes:
        tensors = dict(self.state_dict())
        tensors.update(extra or {})
        return wio.save(path, tensors, {**self.metadata(), **(meta or {})})

    @classmethod
    def load(cls, path, direction: str | None = None) -> tuple["FramePredictor", dict, dict]:
        tensors, meta = wio.load(path)
        if direction is not None and meta.get("direction") != direction:
            raise ValueError(f"weights are tagged direction={meta.get('direction')!r}, wanted {direction!r}")
        cfg = config_from_meta(meta)
        model = cls(cfg)
        own = {k: v for k, v in tensors.items() if not k.startswith("ctx.")}
        extra = {k: v for k, v in tensors.items() if k.startswith("ctx.")}
        model.load_state_dict(own)
        return model, extra, meta


def config_from_meta(meta: dict[str, str]) -> ModelConfig:
    def get(key, default):
        return meta.get(f"model.{key}", default)

    scale = get("affine_scale_init", "0.99")
    return ModelConfig(
        width=float(get("width", "1.0")),
        affine_scale_init=None if scale == "None" else float(scale),
        asf_delta_init=get("asf_delta_init", "True") == "True",
        direction=get("direction", meta.get("direction", "bi")),
        dtype=get("dtype", "float32"),
        seed=int(get("seed", "0")),
    )


def parameter_report(config: ModelConfig = ModelConfig()) -> dict[str, int]:
    """Trainable parameter count per component for a configuration."""
    model = FramePredictor(config)
    report = {
        "kernel_unet": model.kernel_unet.n_params(),
        "affine_unet": model.affine_unet.n_params(),
        "asf_heads": model.filters.n_params(),
        "affine_heads": sum(h.n_params() for h in model.affine),
        "gridnet": model.synthesis.n_params(),
    }
    report["total"] = sum(report.values())
    return report
