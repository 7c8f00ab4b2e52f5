"""Raw planar YUV 4:2:0 (8-bit, no header) reading and writing."""

from __future__ import annotations

from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np


class YUVFrame(NamedTuple):
    y: np.ndarray  # (H, W) uint8
    u: np.ndarray  # (H/2, W/2)
    v: np.ndarray

    @property
    def width(self) -> int:
        return self.y.shape[1]

    @property
    def height(self) -> int:
        return self.y.shape[0]

    def planes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.y, self.u, self.v


def frame_bytes(width: int, height: int) -> int:
    _check_dims(width, height)
    return width * height * 3 // 2


def _check_dims(width: int, height: int) -> None:
    if width <= 0 or height <= 0 or width % 2 or height % 2:
        raise ValueError(f"YUV420 needs positive even dimensions, got {width}x{height}")


def from_bytes(buf: bytes, width: int, height: int) -> YUVFrame:
    n = width * height
    raw = np.frombuffer(buf, dtype=np.uint8)
    if raw.size != n * 3 // 2:
        raise ValueError(f"expected {n * 3 // 2} bytes for {width}x{height}, got {raw.size}")
    y = raw[:n].reshape(height, width)
    u = raw[n : n + n // 4].reshape(height // 2, width // 2)
    v = raw[n + n // 4 :].reshape(height // 2, width // 2)
    return YUVFrame(y.copy(), u.copy(), v.copy())


def to_bytes(frame: YUVFrame) -> bytes:
    return b"".join(np.ascontiguousarray(p, dtype=np.uint8).tobytes() for p in frame)


def read_frames(path, width: int, height: int, count: int | None = None, start: int = 0) -> list[YUVFrame]:
    return list(iter_frames(path, width, height, count, start))


def iter_frames(path, width: int, height: int, count: int | None = None, start: int = 0) -> Iterator[YUVFrame]:
    size = frame_bytes(width, height)
    with open(path, "rb") as fh:
        fh.seek(start * size)
        produced = 0
        while count is None or produced < count:
            buf = fh.read(size)
            if len(buf) < size:
                break
            yield from_bytes(buf, width, height)
            produced += 1


def write_frames(path, frames, append: bool = False) -> None:
    with open(path, "ab" if append else "wb") as fh:
        for f in frames:
            fh.write(to_bytes(f))


def to_float444(frame: YUVFrame) -> np.ndarray:
    """``(3, H, W)`` float array in [0, 1]; chroma upsampled bilinearly (half-pixel centres)."""
    from .ops import resize_matrix

    h, w = frame.height, frame.width
    mh, mw = resize_matrix(h // 2, h), resize_matrix(w // 2, w)
    out = np.empty((3, h, w))
    out[0] = frame.y / 255.0
    out[1] = mh @ (frame.u / 255.0) @ mw.T
    out[2] = mh @ (frame.v / 255.0) @ mw.T
    return out


def from_float444(arr: np.ndarray) -> YUVFrame:
    """Inverse of :func:`to_float444`: chroma is 2x2 averaged, values rounded and clipped."""
    arr = np.asarray(arr, dtype=np.float64)
    _, h, w = arr.shape
    q = lambda a: np.clip(np.rint(a * 255.0), 0, 255).astype(np.uint8)  # noqa: E731
    down = lambda a: a.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))  # noqa: E731
    return YUVFrame(q(arr[0]), q(down(arr[1])), q(down(arr[2])))
