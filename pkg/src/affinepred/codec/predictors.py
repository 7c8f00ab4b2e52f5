"""Frame predictors for the codec and synthetic test sequences."""

from __future__ import annotations

import numpy as np

from ..synthetic import Texture
from ..yuv import YUVFrame, from_float444


def shift_plane(plane: np.ndarray, sx: float, sy: float) -> np.ndarray:
    """Content moved by ``(sx, sy)`` pixels; bilinear, edges replicated."""
    h, w = plane.shape
    x = np.arange(w) - sx
    y = np.arange(h) - sy
    x0 = np.floor(x).astype(int)
    y0 = np.floor(y).astype(int)
    ax = x - x0
    ay = y - y0
    p = plane.astype(np.float64)

    def at(yy, xx):
        return p[np.ix_(np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1))]

    top = at(y0, x0) * (1 - ax) + at(y0, x0 + 1) * ax
    bot = at(y0 + 1, x0) * (1 - ax) + at(y0 + 1, x0 + 1) * ax
    return top * (1 - ay)[:, None] + bot * ay[:, None]


def shift_frame(frame: YUVFrame, sx: float, sy: float) -> np.ndarray:
    """Float planes ``(y, u, v)`` of ``frame`` moved by ``(sx, sy)`` luma pixels."""
    return (shift_plane(frame.y, sx, sy), shift_plane(frame.u, sx / 2, sy / 2), shift_plane(frame.v, sx / 2, sy / 2))


class ShiftPredictor:
    """Ideal predictor for global translation by ``(dx, dy)`` pixels per frame.

    Each decoded reference is moved to the target time and the two are
    averaged.
    """

    def __init__(self, dx: float, dy: float):
        self.dx = dx
        self.dy = dy

    def __call__(self, ref1: YUVFrame, ref2: YUVFrame, t1: int, t2: int, t: int) -> YUVFrame:
        a = shift_frame(ref1, (t - t1) * self.dx, (t - t1) * self.dy)
        b = shift_frame(ref2, (t - t2) * self.dx, (t - t2) * self.dy)
        return YUVFrame(*(np.clip(np.rint((p + q) / 2), 0, 255).astype(np.uint8) for p, q in zip(a, b)))


class ModelPredictor:
    """Wraps a trained :class:`~affinepred.model.FramePredictor` through the frame composer."""

    def __init__(self, model, chroma: str = "upsample", batch_size: int = 4):
        from ..compose import compose_yuv, model_predictor

        self._compose = compose_yuv
        self._batch = model_predictor(model, batch_size)
        self.chroma = chroma

    def __call__(self, ref1: YUVFrame, ref2: YUVFrame, t1: int, t2: int, t: int) -> YUVFrame:
        return self._compose(None, ref1, ref2, chroma=self.chroma, batch=self._batch)


def translating_sequence(n: int, width: int, height: int, dx: float, dy: float, seed: int = 0) -> list[YUVFrame]:
    """``n`` frames of a smooth texture moving ``(dx, dy)`` pixels per frame."""
    tex = Texture(np.random.default_rng(seed))
    qx, qy = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
    return [from_float444(tex(qx - t * dx, qy - t * dy)) for t in range(n)]
