"""Warping a reference patch by a sampling field.

``mclc`` applies each pixel's 8x8 kernel to the reference neighbourhood at
the floored warped position; ``bilinear_sample`` interpolates the four
nearest samples.  Both replicate border samples for out-of-range taps.

Even-length kernel anchoring: tap index ``k`` of an 8-tap axis reads offset
``k - 3``, i.e. offsets ``-3 .. +4`` around the floored coordinate.
"""

from __future__ import annotations

import numpy as np

from .affine import unnormalize
from .kernels import TAP_ANCHOR
from .tensor import ShapeError, Tensor, record


def _flat_patch(p: np.ndarray) -> np.ndarray:
    b, c, h, w = p.shape
    return np.ascontiguousarray(p.transpose(0, 2, 3, 1)).reshape(b * h * w, c)


def _pixel_coords(s: np.ndarray, h: int, w: int):
    n = unnormalize(s[:, 0], w)
    m = unnormalize(s[:, 1], h)
    return n, m


class _Gatherer:
    """Flat index arithmetic for clamped reads from a ``(B, C, H, W)`` patch."""

    def __init__(self, shape):
        self.b, self.c, self.h, self.w = shape
        self.base = (np.arange(self.b) * (self.h * self.w))[:, None, None]

    def index(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        rows = np.clip(rows, 0, self.h - 1)
        cols = np.clip(cols, 0, self.w - 1)
        return self.base + rows * self.w + cols

    def scatter(self, idx_list, weights_list) -> np.ndarray:
        """Sum ``weights[..., ch]`` into patch positions ``idx``; returns ``(B, C, H, W)``."""
        n = self.b * self.h * self.w
        idx = np.concatenate([i.reshape(-1) for i in idx_list])
        wts = np.concatenate([wt.reshape(-1, self.c) for wt in weights_list])
        out = np.empty((n, self.c), dtype=wts.dtype)
        for ch in range(self.c):
            out[:, ch] = np.bincount(idx, weights=wts[:, ch], minlength=n)
        return out.reshape(self.b, self.h, self.w, self.c).transpose(0, 3, 1, 2).copy()


def _check(name: str, patch: Tensor, s_field: Tensor):
    if patch.ndim != 4 or s_field.ndim != 4 or s_field.shape[1] != 2:
        raise ShapeError(f"{name}: patch {patch.shape}, field {s_field.shape}")
    if s_field.shape[0] != patch.shape[0] or s_field.shape[2:] != patch.shape[2:]:
        raise ShapeError(f"{name}: patch {patch.shape}, field {s_field.shape}")


def _mclc_eval(pflat, gat: _Gatherer, k: np.ndarray, fn: np.ndarray, fm: np.ndarray, keep: bool):
    taps = k.shape[1]
    out = np.zeros((gat.b, gat.h, gat.w, gat.c), dtype=np.result_type(pflat, k))
    saved = []
    for r in range(taps):
        rows = fm + (r - TAP_ANCHOR)
        for c in range(taps):
            idx = gat.index(rows, fn + (c - TAP_ANCHOR))
            vals = pflat[idx]
            out += k[:, r, c][..., None] * vals
            if keep:
                saved.append((idx, vals))
    return out, saved


def mclc(patch: Tensor, kernels: Tensor, s_field: Tensor) -> Tensor:
    """Local convolution at warped positions.

    ``V[b, ch, y, x] = sum_{r,c} K[b, r, c, y, x] * P[b, ch, fm + r - 3, fn + c - 3]``
    where ``(fn, fm)`` is the floored pixel position of ``S[b, :, y, x]``.

    The coordinate gradient is the forward difference of V when the kernel
    is moved one pixel right (or down), not the derivative of the floored
    function (which is zero almost everywhere).
    """
    _check("mclc", patch, s_field)
    b, _, h, w = patch.shape
    if kernels.ndim != 5 or kernels.shape[0] != b or kernels.shape[1] != kernels.shape[2] or kernels.shape[3:] != (h, w):
        raise ShapeError(f"mclc: kernels {kernels.shape} for patch {patch.shape}")
    n, m = _pixel_coords(s_field.data, h, w)
    fn = np.floor(n).astype(np.int64)
    fm = np.floor(m).astype(np.int64)
    gat = _Gatherer(patch.shape)
    pflat = _flat_patch(patch.data)
    k = kernels.data
    out, saved = _mclc_eval(pflat, gat, k, fn, fm, keep=True)
    v = out.transpose(0, 3, 1, 2).copy()

    def grad_fn(g):
        gl = np.ascontiguousarray(g.transpose(0, 2, 3, 1))  # (B, H, W, C)
        taps = k.shape[1]
        gp = gk = gs = None
        if kernels.requires_grad:
            gk = np.empty_like(k)
            for i, (_, vals) in enumerate(saved):
                gk[:, i // taps, i % taps] = np.einsum("byxc,byxc->byx", gl, vals)
        if patch.requires_grad:
            wts = [gl * k[:, i // taps, i % taps][..., None] for i in range(len(saved))]
            gp = gat.scatter([idx for idx, _ in saved], wts)
        if s_field.requires_grad:
            vx, _ = _mclc_eval(pflat, gat, k, fn + 1, fm, keep=False)
            vy, _ = _mclc_eval(pflat, gat, k, fn, fm + 1, keep=False)
            gs = np.empty(s_field.shape, dtype=g.dtype)
            gs[:, 0] = np.einsum("byxc,byxc->byx", gl, vx - out) * (w / 2.0)
            gs[:, 1] = np.einsum("byxc,byxc->byx", gl, vy - out) * (h / 2.0)
        return gp, gk, gs

    return record("mclc", v, (patch, kernels, s_field), grad_fn)


def mclc_shifted(patch: np.ndarray, kernels: np.ndarray, s_field: np.ndarray, dx: int = 0, dy: int = 0) -> np.ndarray:
    """Forward MCLC with the kernel anchor moved by whole pixels (no tape)."""
    b, _, h, w = patch.shape
    n, m = _pixel_coords(s_field, h, w)
    fn = np.floor(n).astype(np.int64) + dx
    fm = np.floor(m).astype(np.int64) + dy
    gat = _Gatherer(patch.shape)
    out, _ = _mclc_eval(_flat_patch(patch), gat, kernels, fn, fm, keep=False)
    return out.transpose(0, 3, 1, 2).copy()


def bilinear_sample(patch: Tensor, s_field: Tensor) -> Tensor:
    """Bilinear gather at ``S`` with weights ``max(0, 1 - |floor(n) + p - n|)``."""
    _check("bilinear_sample", patch, s_field)
    b, c, h, w = patch.shape
    n, m = _pixel_coords(s_field.data, h, w)
    fn = np.floor(n)
    fm = np.floor(m)
    ax = (n - fn).astype(patch.dtype)  # weight of p = 1
    ay = (m - fm).astype(patch.dtype)
    fn = fn.astype(np.int64)
    fm = fm.astype(np.int64)
    gat = _Gatherer(patch.shape)
    pflat = _flat_patch(patch.data)
    idx = {(p, q): gat.index(fm + q, fn + p) for p in (0, 1) for q in (0, 1)}
    vals = {key: pflat[i] for key, i in idx.items()}
    wx = {0: 1.0 - ax, 1: ax}
    wy = {0: 1.0 - ay, 1: ay}
    out = np.zeros((b, h, w, c), dtype=patch.dtype)
    for (p, q), val in vals.items():
        out += (wx[p] * wy[q])[..., None] * val
    result = out.transpose(0, 3, 1, 2).copy()

    def grad_fn(g):
        gl = np.ascontiguousarray(g.transpose(0, 2, 3, 1))
        gp = gs = None
        if patch.requires_grad:
            keys = list(idx)
            gp = gat.scatter([idx[k_] for k_ in keys], [gl * (wx[k_[0]] * wy[k_[1]])[..., None] for k_ in keys])
        if s_field.requires_grad:
            dn = sum(wy[q][..., None] * (vals[(1, q)] - vals[(0, q)]) for q in (0, 1))
            dm = sum(wx[p][..., None] * (vals[(p, 1)] - vals[(p, 0)]) for p in (0, 1))
            gs = np.empty(s_field.shape, dtype=g.dtype)
            gs[:, 0] = np.einsum("byxc,byxc->byx", gl, dn) * (w / 2.0)
            gs[:, 1] = np.einsum("byxc,byxc->byx", gl, dm) * (h / 2.0)
        return gp, gs

    return record("bilinear_sample", result, (patch, s_field), grad_fn)
