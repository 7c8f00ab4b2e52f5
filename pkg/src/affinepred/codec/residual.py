"""Transform-coding proxy: 8x8 DCT, uniform quantiser, log-magnitude bit estimate."""

from __future__ import annotations

import numpy as np

from ..loss import dct_matrix

TRANSFORM = 8
_D = dct_matrix(TRANSFORM)


def qstep(qp: float) -> float:
    """HEVC-style step size, doubling every 6 QP; step 1 at QP 4."""
    return float(2.0 ** ((qp - 4) / 6.0))


def lagrangian(qp: float) -> float:
    return float(0.85 * 2.0 ** ((qp - 12) / 3.0))


def _blocks(x: np.ndarray) -> np.ndarray:
    h, w = x.shape
    if h % TRANSFORM or w % TRANSFORM:
        raise ValueError(f"residual block {x.shape} is not a multiple of {TRANSFORM}")
    return x.reshape(h // TRANSFORM, TRANSFORM, w // TRANSFORM, TRANSFORM).transpose(0, 2, 1, 3)


def _unblocks(b: np.ndarray) -> np.ndarray:
    nh, nw, j, _ = b.shape
    return b.transpose(0, 2, 1, 3).reshape(nh * j, nw * j)


def forward_dct(x: np.ndarray) -> np.ndarray:
    return _D @ _blocks(np.asarray(x, np.float64)) @ _D.T


def inverse_dct(c: np.ndarray) -> np.ndarray:
    return _unblocks(_D.T @ c @ _D)


def quantize(coef: np.ndarray, step: float) -> np.ndarray:
    """Integer levels; step 0 keeps coefficients unquantised (lossless limit)."""
    if step == 0:
        return coef.copy()
    return np.rint(coef / step)


def dequantize(levels: np.ndarray, step: float) -> np.ndarray:
    return levels.copy() if step == 0 else levels * step


def level_bits(levels: np.ndarray) -> float:
    """Per 8x8: 1 coded-block flag, then sum(log2(1+|l|)) plus a sign bit per nonzero."""
    mag = np.abs(levels)
    return float(levels.shape[0] * levels.shape[1] + np.log2(1.0 + mag).sum() + np.count_nonzero(mag))


def code_residual(residual: np.ndarray, qp: float | None = None, step: float | None = None):
    """``(bits, levels, reconstructed residual)`` for a 2-D residual block.

    Pass ``qp`` or an explicit ``step`` (0 = no quantisation).
    """
    if step is None:
        if qp is None:
            raise ValueError("need qp or step")
        step = qstep(qp)
    levels = quantize(forward_dct(residual), step)
    return level_bits(levels), levels, reconstruct_residual(levels, step)


def reconstruct_residual(levels: np.ndarray, step: float) -> np.ndarray:
    return inverse_dct(dequantize(levels, step))
