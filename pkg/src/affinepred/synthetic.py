"""Synthetic training triplets with analytically known motion.

Content is a random sum of 2-D cosines, so every frame can be rendered
exactly at any sub-pixel position.  The scene moves by ``(dx, dy)`` pixels
and zooms by ``zoom`` about the patch centre per frame step; frame ``tau``
(the target is ``tau = 0``) shows at pixel ``q`` the content point
``c + (q - c - tau * d) * zoom**-tau``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Frame offsets of (ref1, ref2) relative to the target.
REF_TIMES = {"uni": (-1, -2), "bi": (-1, 1)}


@dataclass(frozen=True)
class Motion:
    dx: float = 0.0
    dy: float = 0.0
    zoom: float = 1.0


@dataclass
class PatchTriplet:
    ref1: np.ndarray  # (3, H, W)
    ref2: np.ndarray
    target: np.ndarray
    direction: str
    times: tuple[int, int, int]  # (t1, t2, t)
    motion: Motion | None = None

    def __post_init__(self):
        t1, t2, t = self.times
        if self.direction == "bi" and not t1 < t < t2:
            raise ValueError(f"bi-directional triplet needs t1 < t < t2, got {self.times}")
        if self.direction == "uni" and not t2 == t1 - 1 == t - 2:
            raise ValueError(f"uni-directional triplet needs t2 = t1 - 1 = t - 2, got {self.times}")


class Texture:
    """Smooth random colour texture defined on the continuous plane."""

    def __init__(self, rng: np.random.Generator, n_waves: int = 24, min_period: float = 8.0, max_period: float = 40.0):
        period = rng.uniform(min_period, max_period, n_waves)
        angle = rng.uniform(0.0, 2 * np.pi, n_waves)
        self.freq = np.stack([np.cos(angle), np.sin(angle)], axis=1) / period[:, None]
        self.phase = rng.uniform(0.0, 2 * np.pi, n_waves)
        amp = rng.uniform(0.5, 1.0, n_waves)
        # luma carries most of the energy, chroma-like channels less
        mix = rng.normal(size=(3, n_waves)) * np.array([[1.0], [0.4], [0.4]])
        mix[0] = np.abs(mix[0]) + 0.3
        self.weights = mix * amp / np.sqrt(n_waves)
        self.offset = rng.uniform(-500.0, 500.0, 2)

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Render at arrays of continuous pixel positions; returns ``(3, *x.shape)``."""
        xs = x[..., None] + self.offset[0]
        ys = y[..., None] + self.offset[1]
        waves = np.cos(2 * np.pi * (xs * self.freq[:, 0] + ys * self.freq[:, 1]) + self.phase)
        vals = np.einsum("...k,ck->c...", waves, self.weights)
        vals = 0.5 + 0.22 * vals
        return np.clip(vals, 0.0, 1.0)


def frame_positions(size: int, motion: Motion, tau: float):
    """Continuous content positions shown by frame ``tau`` at each pixel."""
    c = (size - 1) / 2.0
    q = np.arange(size, dtype=np.float64)
    qx, qy = np.meshgrid(q, q)
    s = motion.zoom ** (-tau)
    return c + (qx - c - tau * motion.dx) * s, c + (qy - c - tau * motion.dy) * s


def true_displacement(size: int, motion: Motion, tau: float) -> np.ndarray:
    """Where the target's pixels are found in frame ``tau``: ``(2, H, W)`` offsets in pixels."""
    c = (size - 1) / 2.0
    q = np.arange(size, dtype=np.float64)
    qx, qy = np.meshgrid(q, q)
    z = motion.zoom**tau
    return np.stack([(qx - c) * (z - 1) + tau * motion.dx, (qy - c) * (z - 1) + tau * motion.dy])


def gen_synthetic_triplet(seed: int, motion: Motion, size: int = 64, direction: str = "bi") -> PatchTriplet:
    if direction not in REF_TIMES:
        raise ValueError(f"direction must be 'uni' or 'bi', got {direction!r}")
    t_ref1, t_ref2 = REF_TIMES[direction]
    for tau in (t_ref1, t_ref2):
        disp = true_displacement(size, motion, tau)
        if np.abs(disp).max() > size / 2:
            raise ValueError(f"motion {motion} moves content more than half a {size}-pixel patch")
    tex = Texture(np.random.default_rng(seed))
    frames = [tex(*frame_positions(size, motion, tau)) for tau in (t_ref1, t_ref2, 0)]
    t = 2 if direction == "uni" else 1
    times = (t + t_ref1, t + t_ref2, t)
    return PatchTriplet(frames[0], frames[1], frames[2], direction, times, motion)


def random_motion(rng: np.random.Generator, max_shift: float, max_zoom: float = 0.0, integer: bool = False) -> Motion:
    shift = rng.uniform(-max_shift, max_shift, 2)
    if integer:
        shift = np.rint(shift)
    zoom = 1.0 + rng.uniform(-max_zoom, max_zoom) if max_zoom > 0 else 1.0
    return Motion(float(shift[0]), float(shift[1]), float(zoom))


def synthetic_dataset(
    count: int,
    seed: int,
    size: int = 64,
    direction: str = "bi",
    max_shift: float = 6.0,
    max_zoom: float = 0.0,
    static: bool = False,
) -> list[PatchTriplet]:
    """``count`` triplets with per-triplet random global motion (none if ``static``)."""
    rng = np.random.default_rng(seed)
    per_frame = max_shift if direction == "bi" else max_shift / 2
    out = []
    for _ in range(count):
        motion = Motion() if static else random_motion(rng, per_frame, max_zoom)
        out.append(gen_synthetic_triplet(int(rng.integers(2**31)), motion, size, direction))
    return out


def stack(triplets: list[PatchTriplet], dtype=np.float64):
    """Batch arrays ``(ref1, ref2, target)``, each ``(B, 3, H, W)``."""
    return tuple(np.stack([getattr(t, k) for t in triplets]).astype(dtype) for k in ("ref1", "ref2", "target"))
