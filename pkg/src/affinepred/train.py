"""Desk-scale training and evaluation driver."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import weights as wio
from .loss import ContextExtractor, LossConfig, total_loss
from .model import FramePredictor, ModelConfig
from .optim import AdaMax, NonFiniteGradient, poly_lr
from .synthetic import PatchTriplet, stack, synthetic_dataset
from .tensor import Tensor, backward, zero_grad

log = logging.getLogger(__name__)

PSNR_CAP = 100.0
MIN_TRIPLETS = 32
# Hyperparameters that are our own choices rather than published values.
OWN_DEFAULTS = ("adamax_betas=0.9,0.999", "adamax_eps=1e-8", "lr_power", "augment", "leaky_slope=0.1")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    direction: str = "bi"
    patch: int = 64
    width: float = 0.25
    dtype: str = "float32"
    batch_size: int = 4
    epochs: int = 10
    lr: float = 1e-3
    lr_power: float = 1.0
    n_train: int = 32
    n_val: int = 8
    max_shift: float = 6.0
    max_zoom: float = 0.0
    static: bool = False
    satd: bool = True
    mse_multiscale: bool = True
    context: bool = True
    augment: bool = True
    affine_scale_init: float = 0.99
    target_loss: float = 0.0  # early stop once per-pixel loss falls below this (0 = never)
    seed: int = 0
    data_seed: int = 1
    val_seed: int = 2

    @property
    def loss(self) -> LossConfig:
        return LossConfig(
            satd_sizes=(8, 16, 32) if self.satd else (),
            mse_scales=(1, 2, 4) if self.mse_multiscale else (1,),
            context=self.context,
        )

    @property
    def model(self) -> ModelConfig:
        return ModelConfig(
            width=self.width,
            affine_scale_init=self.affine_scale_init,
            direction=self.direction,
            dtype=self.dtype,
            seed=self.seed,
        )

    def steps_per_epoch(self, n: int) -> int:
        return math.ceil(n / self.batch_size)


def parse_config(text: str) -> TrainConfig:
    """Flat ``key = value`` lines; ``#`` starts a comment; unknown keys are errors."""
    kinds = {f.name: f.type for f in fields(TrainConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in kinds:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        kind = kinds[key]
        if kind == "bool":
            values[key] = value.lower() in ("1", "true", "yes", "on")
        elif kind == "int":
            values[key] = int(value)
        elif kind == "float":
            values[key] = float(value)
        else:
            values[key] = value.strip("\"'")
    return TrainConfig(**values)


def format_config(config: TrainConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in asdict(config).items())


def load_config(path) -> TrainConfig:
    return parse_config(Path(path).read_text())


def _augment(rng, r1, r2, tgt, direction):
    if rng.random() < 0.5:
        r1, r2, tgt = r1[..., ::-1], r2[..., ::-1], tgt[..., ::-1]
    if rng.random() < 0.5:
        r1, r2, tgt = r1[..., ::-1, :], r2[..., ::-1, :], tgt[..., ::-1, :]
    if direction == "bi" and rng.random() < 0.5:
        r1, r2 = r2, r1
    return np.ascontiguousarray(r1), np.ascontiguousarray(r2), np.ascontiguousarray(tgt)


def psnr(pred: np.ndarray, target: np.ndarray, peak: float = 1.0) -> float:
    mse = float(np.mean((np.asarray(pred, np.float64) - np.asarray(target, np.float64)) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(peak * peak / mse))


@dataclass
class Evaluation:
    psnr_y: list[float]
    baseline_y: list[float]  # copy-ref1 prediction

    @property
    def mean(self) -> float:
        return float(np.mean(self.psnr_y))

    @property
    def baseline_mean(self) -> float:
        return float(np.mean(self.baseline_y))

    def table(self) -> str:
        rows = ["index psnr_y copy_ref1_psnr_y"]
        rows += [f"{i} {p:.4f} {b:.4f}" for i, (p, b) in enumerate(zip(self.psnr_y, self.baseline_y))]
        rows.append(f"mean {self.mean:.4f} {self.baseline_mean:.4f}")
        return "\n".join(rows)


def evaluate(model: FramePredictor, triplets: list[PatchTriplet], batch_size: int = 4) -> Evaluation:
    """Y-PSNR (channel 0, peak 1.0) of each prediction, capped at 100 dB."""
    scores, base = [], []
    for i in range(0, len(triplets), batch_size):
        chunk = triplets[i : i + batch_size]
        r1, r2, tgt = stack(chunk, model.dtype)
        out = model.predict(r1, r2)
        for k in range(len(chunk)):
            scores.append(psnr(out[k, 0], tgt[k, 0]))
            base.append(psnr(r1[k, 0], tgt[k, 0]))
    return Evaluation(scores, base)


def textured_mask(luma: np.ndarray, margin: int, quantile: float = 0.5) -> np.ndarray:
    """Pixels whose gradient magnitude is above the patch's ``quantile``, away from the border."""
    gy, gx = np.gradient(np.asarray(luma, np.float64))
    mag = np.hypot(gx, gy)
    keep = np.zeros(mag.shape, dtype=bool)
    h, w = mag.shape
    keep[margin : h - margin, margin : w - margin] = True
    return keep & (mag > np.quantile(mag[keep], quantile))


@dataclass
class MotionCheck:
    fraction: float  # share of textured pixels within tolerance
    mean_error: float  # pixels
    pixels: int


def motion_recovery(model: FramePredictor, triplets: list[PatchTriplet], margin: int,
                    tol: float = 1.0, quantile: float = 0.5) -> MotionCheck:
    """Compare the translation part of each affine field with the true motion.

    The translation ``(theta_2, theta_3)`` is converted to pixels (times
    ``W/2`` and ``H/2``) and compared with the true displacement of the
    reference it warps, on textured target pixels.
    """
    from .synthetic import true_displacement
    from .tensor import Tensor

    errs = []
    for i in range(0, len(triplets), 4):
        chunk = triplets[i : i + 4]
        r1, r2, tgt = stack(chunk, model.dtype)
        pred = model.forward(Tensor(r1), Tensor(r2))
        for k, trip in enumerate(chunk):
            _, _, h, w = r1.shape
            mask = textured_mask(tgt[k, 0], margin, quantile)
            t1, t2, t = trip.times
            for theta, tau in zip(pred.theta, (t1 - t, t2 - t)):
                th = theta.data[k].astype(np.float64)
                est = np.stack([th[1] * w / 2.0, th[2] * h / 2.0])
                true = true_displacement(h, trip.motion, tau)
                errs.append(np.hypot(*(est - true))[mask])
    e = np.concatenate(errs)
    return MotionCheck(float(np.mean(e <= tol)), float(e.mean()), int(e.size))


@dataclass
class TrainResult:
    model: FramePredictor
    extractor: ContextExtractor
    config: TrainConfig
    losses: list[float] = field(default_factory=list)
    per_pixel: list[float] = field(default_factory=list)
    steps: int = 0
    seconds: float = 0.0
    validation: Evaluation | None = None

    def save(self, path) -> bytes:
        meta = {"train." + k: str(v) for k, v in asdict(self.config).items()}
        return self.model.save(path, extra=self.extractor.state(), meta=meta)

    def manifest(self, weights_blob: bytes | None = None) -> str:
        lines = [f"{k}={v}" for k, v in asdict(self.config).items()]
        lines.append("own_defaults=" + ";".join(OWN_DEFAULTS))
        lines.append(f"steps={self.steps}")
        lines.append(f"seconds={self.seconds:.1f}")
        if self.losses:
            lines.append(f"initial_loss={self.losses[0]:.6g}")
            lines.append(f"final_loss={self.losses[-1]:.6g}")
            lines.append(f"final_loss_per_pixel={self.per_pixel[-1]:.6g}")
        if self.validation is not None:
            lines.append(f"val_psnr_y={self.validation.mean:.4f}")
            lines.append(f"val_copy_ref1_psnr_y={self.validation.baseline_mean:.4f}")
        if weights_blob is not None:
            lines.append(f"weights_hash={wio.content_hash(weights_blob)}")
        return "\n".join(lines) + "\n"


def make_datasets(config: TrainConfig) -> tuple[list[PatchTriplet], list[PatchTriplet]]:
    common = dict(size=config.patch, direction=config.direction, max_shift=config.max_shift,
                  max_zoom=config.max_zoom, static=config.static)
    return (
        synthetic_dataset(config.n_train, config.data_seed, **common),
        synthetic_dataset(config.n_val, config.val_seed, **common),
    )


def train(
    config: TrainConfig,
    dataset: list[PatchTriplet] | None = None,
    validation: list[PatchTriplet] | None = None,
    model: FramePredictor | None = None,
) -> TrainResult:
    if dataset is None:
        dataset, default_val = make_datasets(config)
        validation = default_val if validation is None else validation
    if len(dataset) < MIN_TRIPLETS:
        raise ValueError(f"need at least {MIN_TRIPLETS} training triplets, got {len(dataset)}")
    for t in dataset:
        if t.direction != config.direction:
            raise ValueError(f"triplet direction {t.direction!r} does not match config {config.direction!r}")
    rng = np.random.default_rng(config.seed + 7919)
    model = model or FramePredictor(config.model)
    dtype = model.dtype
    extractor = ContextExtractor(dtype=dtype)
    named = list(model.named_parameters())
    params = [p for _, p in named]
    opt = AdaMax(params, lr=config.lr, names=[n for n, _ in named])
    loss_cfg = config.loss
    n = len(dataset)
    per_epoch = config.steps_per_epoch(n)
    total_steps = config.epochs * per_epoch
    result = TrainResult(model, extractor, config)
    started = time.perf_counter()
    initial = None
    over = 0
    step = 0
    done = False
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for b in range(per_epoch):
            batch = [dataset[i] for i in order[b * config.batch_size : (b + 1) * config.batch_size]]
            r1, r2, tgt = stack(batch, dtype)
            if config.augment:
                aug = [_augment(rng, r1[k], r2[k], tgt[k], config.direction) for k in range(len(batch))]
                r1, r2, tgt = (np.stack(a) for a in zip(*aug))
            pred = model(Tensor(r1), Tensor(r2))
            terms = total_loss(pred, Tensor(tgt), loss_cfg, extractor)
            bsz = len(batch)
            value = float(terms.total.data) / bsz
            if not math.isfinite(value):
                raise TrainingDiverged(f"non-finite loss at step {step + 1}")
            zero_grad(params)
            grads = backward(terms.total, params)
            inv = 1.0 / bsz
            grads = {p: g * inv for p, g in grads.items()}
            try:
                opt.step(grads, lr=poly_lr(config.lr, step, total_steps, config.lr_power))
            except NonFiniteGradient as exc:
                raise TrainingDiverged(str(exc)) from exc
            step += 1
            result.losses.append(value)
            result.per_pixel.append(value / (tgt.shape[2] * tgt.shape[3]))
            if initial is None:
                initial = value
            over = over + 1 if value > 10.0 * initial else 0
            if over >= 50:
                raise TrainingDiverged(f"loss above 10x initial ({initial:.4g}) for 50 steps at step {step}")
            if step % 50 == 0:
                log.info("epoch %d step %d loss %.5g per-pixel %.3g", epoch, step, value, result.per_pixel[-1])
            if config.target_loss and result.per_pixel[-1] < config.target_loss:
                done = True
                break
        if done:
            break
    result.steps = step
    result.seconds = time.perf_counter() - started
    if validation:
        result.validation = evaluate(model, validation, config.batch_size)
    return result
