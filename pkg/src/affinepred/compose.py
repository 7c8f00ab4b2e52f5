"""Assemble a full predicted frame from per-window patch predictions.

Along each axis the frame is cut into 64-pixel cells (the last may be
shorter).  Cell 0 is read from the window at 0; cell ``k >= 1`` from the
window at ``64k - 44`` so the cell sits in the window's middle (which puts
the second window 20 pixels in), unless that window would cross the frame
edge, in which case the window is snapped flush with the edge.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .yuv import YUVFrame, from_float444, to_float444

PATCH = 152
BLOCK = 64
FIRST_STRIDE = 20


class TileError(RuntimeError):
    pass


@dataclass(frozen=True)
class Tile:
    index: int
    window: tuple[int, int]  # (x, y) origin of the input window in the frame
    crop: tuple[int, int, int, int]  # (x, y, w, h) inside the window / output patch
    dest: tuple[int, int, int, int]  # (x, y, w, h) in the frame


def axis_plan(length: int, patch: int = PATCH, block: int = BLOCK, first: int = FIRST_STRIDE):
    """``[(window_origin, dest_start, dest_len), ...]`` along one axis."""
    if length < patch:
        raise ValueError(f"frame extent {length} is smaller than the {patch}-pixel window")
    back = block - first
    out = []
    for start in range(0, length, block):
        k = start // block
        origin = 0 if k == 0 else min(k * block - back, length - patch)
        out.append((max(origin, 0), start, min(block, length - start)))
    return out


def plan_tiles(frame_w: int, frame_h: int, patch: int = PATCH) -> list[Tile]:
    xs = axis_plan(frame_w, patch)
    ys = axis_plan(frame_h, patch)
    tiles = []
    for wy, dy, dh in ys:
        for wx, dx, dw in xs:
            tiles.append(Tile(len(tiles), (wx, wy), (dx - wx, dy - wy, dw, dh), (dx, dy, dw, dh)))
    check_cover(tiles, frame_w, frame_h, patch)
    return tiles


def check_cover(tiles: list[Tile], frame_w: int, frame_h: int, patch: int = PATCH) -> None:
    """Raise unless destination rects partition the frame and windows stay inside it."""
    count = np.zeros((frame_h, frame_w), dtype=np.int32)
    for t in tiles:
        wx, wy = t.window
        cx, cy, cw, ch = t.crop
        dx, dy, dw, dh = t.dest
        if wx < 0 or wy < 0 or wx + patch > frame_w or wy + patch > frame_h:
            raise AssertionError(f"tile {t.index}: window {t.window} leaves the frame")
        if (cw, ch) != (dw, dh) or cx < 0 or cy < 0 or cx + cw > patch or cy + ch > patch:
            raise AssertionError(f"tile {t.index}: crop {t.crop} invalid for dest {t.dest}")
        if (wx + cx, wy + cy) != (dx, dy):
            raise AssertionError(f"tile {t.index}: crop does not line up with its destination")
        count[dy : dy + dh, dx : dx + dw] += 1
    if not np.all(count == 1):
        raise AssertionError("tile destinations do not cover the frame exactly once")


Predictor = Callable[[np.ndarray, np.ndarray], np.ndarray]


def compose(predictor: Predictor, ref1: np.ndarray, ref2: np.ndarray, patch: int = PATCH,
            batch: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None, batch_size: int = 8) -> np.ndarray:
    """Predict a ``(C, H, W)`` frame from two references of the same shape.

    ``predictor(p1, p2)`` maps two ``(C, patch, patch)`` windows to an output
    patch.  If ``batch`` is given it is used instead with stacked windows.
    Each distinct window is predicted once.
    """
    ref1 = np.asarray(ref1)
    ref2 = np.asarray(ref2)
    if ref1.shape != ref2.shape or ref1.ndim != 3:
        raise ValueError(f"reference frames must be equal (C,H,W) arrays, got {ref1.shape} and {ref2.shape}")
    _, h, w = ref1.shape
    tiles = plan_tiles(w, h, patch)
    windows = sorted({t.window for t in tiles}, key=lambda o: (o[1], o[0]))
    first_tile = {}
    for t in tiles:
        first_tile.setdefault(t.window, t.index)

    def cut(ref, origin):
        x, y = origin
        return ref[:, y : y + patch, x : x + patch]

    outputs: dict[tuple[int, int], np.ndarray] = {}
    if batch is None:
        for origin in windows:
            try:
                outputs[origin] = np.asarray(predictor(cut(ref1, origin), cut(ref2, origin)))
            except Exception as exc:  # re-raised with the tile attached
                raise TileError(f"predictor failed on tile {first_tile[origin]} (window {origin}): {exc}") from exc
    else:
        for i in range(0, len(windows), batch_size):
            chunk = windows[i : i + batch_size]
            a = np.stack([cut(ref1, o) for o in chunk])
            b = np.stack([cut(ref2, o) for o in chunk])
            try:
                res = np.asarray(batch(a, b))
            except Exception as exc:
                raise TileError(f"predictor failed on tiles from {first_tile[chunk[0]]}: {exc}") from exc
            outputs.update(zip(chunk, res))

    out = None
    for t in tiles:
        patch_out = outputs[t.window]
        if out is None:
            out = np.empty((patch_out.shape[0], h, w), dtype=patch_out.dtype)
        cx, cy, cw, ch = t.crop
        dx, dy, dw, dh = t.dest
        out[:, dy : dy + dh, dx : dx + dw] = patch_out[:, cy : cy + ch, cx : cx + cw]
    return out


CHROMA_MODES = ("upsample", "planar")


def compose_yuv(predictor: Predictor, f1: YUVFrame, f2: YUVFrame, chroma: str = "upsample", **kw) -> YUVFrame:
    """Predict a YUV 4:2:0 frame.

    ``upsample``: chroma is bilinearly upsampled to full resolution and the
    predictor sees 3-channel YUV 4:4:4 windows.  ``planar``: every plane is
    predicted on its own at native resolution, presented to the predictor
    as a 3-channel window with the plane replicated; output channel 0 is
    kept.  Chroma planes then need to be at least one window in size.
    """
    if chroma == "upsample":
        return from_float444(compose(predictor, to_float444(f1), to_float444(f2), **kw))
    if chroma != "planar":
        raise ValueError(f"chroma mode must be one of {CHROMA_MODES}")
    planes = []
    for p1, p2 in zip(f1, f2):
        a = np.repeat((p1 / 255.0)[None], 3, axis=0)
        b = np.repeat((p2 / 255.0)[None], 3, axis=0)
        out = compose(predictor, a, b, **kw)[0]
        planes.append(np.clip(np.rint(out * 255.0), 0, 255).astype(np.uint8))
    return YUVFrame(*planes)


def model_predictor(model, batch_size: int = 4):
    """Adapt a :class:`~affinepred.model.FramePredictor` to :func:`compose`'s ``batch`` hook."""

    def run(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        out = [model.predict(a[i : i + batch_size], b[i : i + batch_size]) for i in range(0, len(a), batch_size)]
        return np.concatenate(out).astype(np.float64)

    return run
