"""Naive-loop reference implementations used as test oracles.

Nothing here calls into the package's numerics; each function is the
textbook definition written with explicit loops.
"""

from __future__ import annotations

import math

import numpy as np


def conv2d(x, w, b, dilation=1, stride=1):
    bsz, cin, h, wd = x.shape
    cout = w.shape[0]
    pad = dilation
    oh = (h + 2 * pad - 2 * dilation - 1) // stride + 1
    ow = (wd + 2 * pad - 2 * dilation - 1) // stride + 1
    out = np.zeros((bsz, cout, oh, ow))
    for n in range(bsz):
        for o in range(cout):
            for i in range(oh):
                for j in range(ow):
                    acc = 0.0 if b is None else b[o]
                    for c in range(cin):
                        for ky in range(3):
                            for kx in range(3):
                                y = i * stride + ky * dilation - pad
                                xx = j * stride + kx * dilation - pad
                                if 0 <= y < h and 0 <= xx < wd:
                                    acc += w[o, c, ky, kx] * x[n, c, y, xx]
                    out[n, o, i, j] = acc
    return out


def avg_pool2(x):
    bsz, c, h, w = x.shape
    out = np.zeros((bsz, c, h // 2, w // 2))
    for n in range(bsz):
        for k in range(c):
            for i in range(h // 2):
                for j in range(w // 2):
                    out[n, k, i, j] = (x[n, k, 2 * i, 2 * j] + x[n, k, 2 * i + 1, 2 * j]
                                       + x[n, k, 2 * i, 2 * j + 1] + x[n, k, 2 * i + 1, 2 * j + 1]) / 4.0
    return out


def _src(i, n_in, n_out):
    s = (i + 0.5) * n_in / n_out - 0.5
    return max(s, 0.0)


def resize(x, oh, ow):
    """Bilinear, half-pixel centres, negative source clamped to 0, edge replicated."""
    bsz, c, h, w = x.shape
    out = np.zeros((bsz, c, oh, ow))
    for i in range(oh):
        sy = _src(i, h, oh)
        y0 = min(int(math.floor(sy)), h - 1)
        y1 = min(y0 + 1, h - 1)
        ay = sy - y0
        for j in range(ow):
            sx = _src(j, w, ow)
            x0 = min(int(math.floor(sx)), w - 1)
            x1 = min(x0 + 1, w - 1)
            ax = sx - x0
            for n in range(bsz):
                for k in range(c):
                    out[n, k, i, j] = ((1 - ay) * ((1 - ax) * x[n, k, y0, x0] + ax * x[n, k, y0, x1])
                                       + ay * ((1 - ax) * x[n, k, y1, x0] + ax * x[n, k, y1, x1]))
    return out


def upsample2(x):
    return resize(x, 2 * x.shape[2], 2 * x.shape[3])


def to_pixels(s, extent):
    return ((s + 1.0) * extent - 1.0) / 2.0


def _clamped(p, n, c, y, x):
    h, w = p.shape[2:]
    return p[n, c, min(max(y, 0), h - 1), min(max(x, 0), w - 1)]


def mclc(p, k, s, shift_x=0, shift_y=0):
    """V[b,c,y,x] = sum_{r,q} K[b,r,q,y,x] P[b,c,fm+r-3,fn+q-3] (clamped)."""
    bsz, ch, h, w = p.shape
    taps = k.shape[1]
    out = np.zeros(p.shape)
    for n in range(bsz):
        for y in range(h):
            for x in range(w):
                fn = math.floor(to_pixels(s[n, 0, y, x], w)) + shift_x
                fm = math.floor(to_pixels(s[n, 1, y, x], h)) + shift_y
                for c in range(ch):
                    acc = 0.0
                    for r in range(taps):
                        for q in range(taps):
                            acc += k[n, r, q, y, x] * _clamped(p, n, c, fm + r - 3, fn + q - 3)
                    out[n, c, y, x] = acc
    return out


def bilinear_sample(p, s):
    bsz, ch, h, w = p.shape
    out = np.zeros(p.shape)
    for n in range(bsz):
        for y in range(h):
            for x in range(w):
                px = to_pixels(s[n, 0, y, x], w)
                py = to_pixels(s[n, 1, y, x], h)
                fx, fy = math.floor(px), math.floor(py)
                for c in range(ch):
                    acc = 0.0
                    for qy in (0, 1):
                        for qx in (0, 1):
                            wgt = max(0.0, 1 - abs(fx + qx - px)) * max(0.0, 1 - abs(fy + qy - py))
                            acc += wgt * _clamped(p, n, c, fy + qy, fx + qx)
                    out[n, c, y, x] = acc
    return out


def dct2_block(blk):
    j = blk.shape[0]
    out = np.zeros((j, j))
    for u in range(j):
        au = math.sqrt(1.0 / j) if u == 0 else math.sqrt(2.0 / j)
        for v in range(j):
            av = math.sqrt(1.0 / j) if v == 0 else math.sqrt(2.0 / j)
            acc = 0.0
            for y in range(j):
                for x in range(j):
                    acc += blk[y, x] * math.cos(math.pi * (2 * y + 1) * u / (2 * j)) * math.cos(
                        math.pi * (2 * x + 1) * v / (2 * j))
            out[u, v] = au * av * acc
    return out


def satd(r, j):
    bsz, c, h, w = r.shape
    total = 0.0
    for n in range(bsz):
        for k in range(c):
            for by in range(h // j):
                for bx in range(w // j):
                    total += np.abs(dct2_block(r[n, k, by * j:(by + 1) * j, bx * j:(bx + 1) * j])).sum()
    return total


def central_diff(f, x, eps=1e-5, idx=None):
    """Central-difference gradient of scalar ``f`` at array ``x`` (modified in place, restored)."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in (range(flat.size) if idx is None else idx):
        old = flat[i]
        flat[i] = old + eps
        hi = f()
        flat[i] = old - eps
        lo = f()
        flat[i] = old
        gf[i] = (hi - lo) / (2 * eps)
    return g


def rel_err(a, b):
    a = np.asarray(a).reshape(-1)
    b = np.asarray(b).reshape(-1)
    den = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / den)
