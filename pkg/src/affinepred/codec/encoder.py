"""Toy block codec with a DNN direct mode and DNN reference-list update.

Frames are YUV 4:2:0 with dimensions divisible by 16, cut into 64x64 luma
blocks (smaller at the right and bottom edges).  Each block picks, by
``J = SSE(Y, U, V) + lambda * bits``, one of

* Skip: first reference, predicted motion vector, no residual
* DnnDirect: collocated block of the DNN frame plus residual
* Inter: integer motion from a decoded reference, optionally split in four
* DnnWithMv: Inter where a partition points at the DNN frame (list update only)
* Intra: DC prediction from reconstructed neighbours

Bits are estimated, not written: flags cost 1 bit, reference indices are
truncated unary, motion vector differences signed Exp-Golomb, and residuals
use :mod:`.residual`.  Motion vector prediction takes the left, then upper
neighbour, skipping intra blocks and any block that used the DNN frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..yuv import YUVFrame
from .refs import DIRECTIONS, Ref, RefLists, Replacement, build_lists, can_predict, rlu_update
from .residual import code_residual, lagrangian, qstep, reconstruct_residual

# Tie-break priority, first wins.
MODES = ("Skip", "DnnDirect", "Inter", "DnnWithMv", "Intra")
CODEC_MODES = ("baseline", "dm", "dm-rlu")
BLOCK = 64
ALIGN = 16


@dataclass(frozen=True)
class CodecConfig:
    qp: float = 32  # fractional values allowed
    mode: str = "baseline"
    direction: str = "uni"
    block: int = BLOCK
    search: int = 8
    split: bool = True

    def __post_init__(self):
        if self.mode not in CODEC_MODES:
            raise ValueError(f"mode must be one of {CODEC_MODES}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        if self.block % ALIGN or self.block < 2 * ALIGN:
            raise ValueError(f"block size must be a multiple of {ALIGN} and at least {2 * ALIGN}")

    @property
    def lam(self) -> float:
        return lagrangian(self.qp)

    @property
    def step(self) -> float:
        return qstep(self.qp)


@dataclass(frozen=True)
class Part:
    rect: tuple[int, int, int, int]  # luma x, y, w, h
    list_index: int
    ref_index: int
    mv: tuple[int, int]


@dataclass
class BlockDecision:
    rect: tuple[int, int, int, int]
    mode: str
    parts: tuple[Part, ...] = ()
    split: bool = False
    levels: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None
    bits: float = 0.0
    sse: float = 0.0
    recon: tuple[np.ndarray, np.ndarray, np.ndarray] | None = field(default=None, repr=False)


def rdo_select(candidates, lam: float):
    """Minimum ``sse + lam * bits``; equal costs go to the earlier mode in :data:`MODES`."""
    if not candidates:
        raise ValueError("no candidate modes")
    return min(candidates, key=lambda c: (c.sse + lam * c.bits, MODES.index(c.mode)))


# -- bit counts


def ue_bits(k: int) -> int:
    return 2 * int(np.floor(np.log2(k + 1))) + 1


def se_bits(v: int) -> int:
    return ue_bits(2 * abs(v) - (v > 0))


def mvd_bits(mv, mvp) -> int:
    return se_bits(mv[0] - mvp[0]) + se_bits(mv[1] - mvp[1])


def ref_bits(index: int, count: int) -> int:
    """Truncated unary."""
    if count <= 1:
        return 0
    return index + 1 if index < count - 1 else count - 1


# -- pixel access


def chroma_rect(rect):
    x, y, w, h = rect
    return x // 2, y // 2, w // 2, h // 2


def fetch(plane: np.ndarray, x: int, y: int, w: int, h: int) -> np.ndarray:
    """Block read with edge replication outside the plane."""
    rows = np.clip(np.arange(y, y + h), 0, plane.shape[0] - 1)
    cols = np.clip(np.arange(x, x + w), 0, plane.shape[1] - 1)
    return plane[np.ix_(rows, cols)]


def _block(frame, rect):
    x, y, w, h = rect
    cx, cy, cw, ch = chroma_rect(rect)
    return (frame[0][y : y + h, x : x + w], frame[1][cy : cy + ch, cx : cx + cw], frame[2][cy : cy + ch, cx : cx + cw])


def _motion_pred(frame: YUVFrame, part: Part, block_rect):
    """Prediction for one partition, placed in block-local coordinates."""
    x, y, w, h = part.rect
    dx, dy = part.mv
    luma = fetch(frame.y, x + dx, y + dy, w, h)
    cx, cy, cw, ch = chroma_rect(part.rect)
    u = fetch(frame.u, cx + dx // 2, cy + dy // 2, cw, ch)
    v = fetch(frame.v, cx + dx // 2, cy + dy // 2, cw, ch)
    return luma, u, v


def _intra_dc(recon, rect):
    out = []
    for i, r in enumerate((rect, chroma_rect(rect), chroma_rect(rect))):
        x, y, w, h = r
        plane = recon[i]
        edge = []
        if y > 0:
            edge.append(plane[y - 1, x : x + w])
        if x > 0:
            edge.append(plane[y : y + h, x - 1])
        dc = int(np.rint(np.mean(np.concatenate(edge)))) if edge else 128
        out.append(np.full((h, w), dc, dtype=np.uint8))
    return tuple(out)


def predict_block(d: BlockDecision, lists: RefLists | None, xhat: YUVFrame | None, recon) -> tuple:
    """The prediction a decoder forms for decision ``d`` (uint8 planes)."""
    if d.mode == "Intra":
        return _intra_dc(recon, d.rect)
    if d.mode == "DnnDirect":
        return tuple(np.array(p) for p in _block(xhat, d.rect))
    x0, y0, w, h = d.rect
    out = [np.empty((h, w), np.uint8), np.empty((h // 2, w // 2), np.uint8), np.empty((h // 2, w // 2), np.uint8)]
    for part in d.parts:
        ref = lists.get(part.list_index)[part.ref_index].frame
        px, py, pw, ph = part.rect
        lx, ly = px - x0, py - y0
        luma, u, v = _motion_pred(ref, part, d.rect)
        out[0][ly : ly + ph, lx : lx + pw] = luma
        out[1][ly // 2 : (ly + ph) // 2, lx // 2 : (lx + pw) // 2] = u
        out[2][ly // 2 : (ly + ph) // 2, lx // 2 : (lx + pw) // 2] = v
    return tuple(out)


def reconstruct_block(d: BlockDecision, pred, step: float):
    if d.levels is None:
        return tuple(np.array(p, np.uint8) for p in pred)
    return tuple(
        np.clip(np.rint(p.astype(np.float64) + reconstruct_residual(lv, step)), 0, 255).astype(np.uint8)
        for p, lv in zip(pred, d.levels)
    )


# -- encoder


def block_grid(width: int, height: int, block: int = BLOCK):
    return [(x, y, min(block, width - x), min(block, height - y)) for y in range(0, height, block) for x in range(0, width, block)]


def split_rects(rect):
    x, y, w, h = rect
    half = 32
    xs = [(x, min(half, w))] + ([(x + half, w - half)] if w > half else [])
    ys = [(y, min(half, h))] + ([(y + half, h - half)] if h > half else [])
    return [(px, py, pw, ph) for py, ph in ys for px, pw in xs]


def _uses_dnn(d: BlockDecision, lists) -> bool:
    if d.mode in ("DnnDirect", "DnnWithMv"):
        return True
    return any(lists.get(p.list_index)[p.ref_index].dnn for p in d.parts)


def mv_predictor(decisions: dict, rect, lists, block: int) -> tuple[int, int]:
    x, y, _, _ = rect
    for key in ((x - block, y), (x, y - block)):
        d = decisions.get(key)
        if d is None or d.mode == "Intra" or not d.parts or _uses_dnn(d, lists):
            continue
        return d.parts[0].mv
    return (0, 0)


class _Search:
    """SSE of a luma partition against every integer displacement within range."""

    def __init__(self, orig_y: np.ndarray, search: int):
        self.orig = orig_y.astype(np.int64)
        self.r = search
        self.cache: dict = {}

    def sse_map(self, key, ref_y: np.ndarray, rect) -> np.ndarray:
        ck = (key, rect)
        if ck not in self.cache:
            x, y, w, h = rect
            r = self.r
            win = fetch(ref_y, x - r, y - r, w + 2 * r, h + 2 * r).astype(np.int64)
            tgt = self.orig[y : y + h, x : x + w]
            views = sliding_window_view(win, (h, w))  # (2r+1, 2r+1, h, w), index [dy, dx]
            diff = views - tgt
            self.cache[ck] = np.einsum("abij,abij->ab", diff, diff)
        return self.cache[ck]

    def best(self, key, ref_y, rect, mvp, lam, extra_bits):
        sse = self.sse_map(key, ref_y, rect)
        r = self.r
        offs = np.arange(-r, r + 1)
        bits = np.array([[se_bits(dx - mvp[0]) + se_bits(dy - mvp[1]) for dx in offs] for dy in offs])
        cost = sse + lam * (bits + extra_bits)
        iy, ix = np.unravel_index(int(np.argmin(cost)), cost.shape)
        return (int(offs[ix]), int(offs[iy])), float(cost[iy, ix]), int(bits[iy, ix]) + extra_bits


def _ref_choices(lists: RefLists, dnn: bool | None):
    out = []
    bi = lists.direction == "bi"
    for li in (0, 1):
        refs = lists.get(li)
        for ri, ref in enumerate(refs):
            if dnn is not None and ref.dnn != dnn:
                continue
            out.append((li, ri, ref, int(bi) + ref_bits(ri, len(refs))))
    return out


def _best_part(search, lists, rect, mvp, lam, dnn):
    best = None
    for li, ri, ref, rb in _ref_choices(lists, dnn):
        key = (li, ri)
        mv, cost, bits = search.best(key, ref.frame.y, rect, mvp, lam, rb)
        if best is None or cost < best[0]:
            best = (cost, Part(rect, li, ri, mv), bits)
    return best


def _finish(cand: BlockDecision, orig_blk, pred, cfg: CodecConfig, residual: bool = True):
    if residual:
        levels, bits = [], 0.0
        for o, p in zip(orig_blk, pred):
            b, lv, _ = code_residual(o.astype(np.float64) - p.astype(np.float64), step=cfg.step)
            levels.append(lv)
            bits += b
        cand.levels = tuple(levels)
        cand.bits += bits
    cand.recon = reconstruct_block(cand, pred, cfg.step)
    cand.sse = float(sum(np.sum((o.astype(np.int64) - r.astype(np.int64)) ** 2) for o, r in zip(orig_blk, cand.recon)))
    return cand


def encode_frame(orig: YUVFrame, lists: RefLists | None, xhat: YUVFrame | None, cfg: CodecConfig):
    """Code one frame; returns ``(recon, decisions, bits)``."""
    width, height = orig.width, orig.height
    recon = tuple(np.zeros_like(p) for p in orig)
    inter = lists is not None and not lists.empty
    lam = cfg.lam
    search = _Search(orig.y, cfg.search)
    decisions: dict = {}
    ordered = []
    total = 0.0
    for rect in block_grid(width, height, cfg.block):
        ob = _block(orig, rect)
        prefix = (1 if inter else 0) + (1 if xhat is not None else 0)
        cands = []
        if inter:
            mvp = mv_predictor(decisions, rect, lists, cfg.block)
            skip = BlockDecision(rect, "Skip", (Part(rect, 0, 0, mvp),), bits=1.0)
            cands.append(_finish(skip, ob, predict_block(skip, lists, xhat, recon), cfg, residual=False))
        if xhat is not None:
            dm = BlockDecision(rect, "DnnDirect", bits=float(prefix))
            cands.append(_finish(dm, ob, predict_block(dm, lists, xhat, recon), cfg))
        intra = BlockDecision(rect, "Intra", bits=float(prefix + (1 if inter else 0)))
        cands.append(_finish(intra, ob, predict_block(intra, lists, xhat, recon), cfg))
        if inter:
            head = prefix + 1 + (1 if cfg.split else 0)
            for mode, dnn in (("Inter", False), ("DnnWithMv", True)):
                whole = _best_part(search, lists, rect, mvp, lam, dnn)
                if whole is not None:
                    d = BlockDecision(rect, mode, (whole[1],), bits=float(head + whole[2]))
                    cands.append(_finish(d, ob, predict_block(d, lists, xhat, recon), cfg))
                if not cfg.split:
                    continue
                parts = [_best_part(search, lists, r, mvp, lam, False if not dnn else None) for r in split_rects(rect)]
                if any(p is None for p in parts):
                    continue
                used_dnn = any(lists.get(p[1].list_index)[p[1].ref_index].dnn for p in parts)
                if used_dnn != dnn:
                    continue
                d = BlockDecision(rect, mode, tuple(p[1] for p in parts), split=True,
                                  bits=float(head + sum(p[2] for p in parts)))
                cands.append(_finish(d, ob, predict_block(d, lists, xhat, recon), cfg))
        best = rdo_select(cands, lam)
        _place(recon, rect, best.recon)
        decisions[rect[:2]] = best
        ordered.append(best)
        total += best.bits
    return YUVFrame(*recon), ordered, total


def _place(recon, rect, blk):
    for i, r in enumerate((rect, chroma_rect(rect), chroma_rect(rect))):
        x, y, w, h = r
        recon[i][y : y + h, x : x + w] = blk[i]


def decode_frame(decisions, lists: RefLists | None, xhat: YUVFrame | None, width: int, height: int, step: float) -> YUVFrame:
    """Rebuild a frame from mode decisions and residual levels alone."""
    recon = (np.zeros((height, width), np.uint8), np.zeros((height // 2, width // 2), np.uint8),
             np.zeros((height // 2, width // 2), np.uint8))
    for d in decisions:
        d = BlockDecision(d.rect, d.mode, d.parts, d.split, d.levels)
        pred = predict_block(d, lists, xhat, recon)
        _place(recon, d.rect, reconstruct_block(d, pred, step))
    return YUVFrame(*recon)


# -- sequences


def coding_order(n: int, direction: str) -> list[int]:
    """uni: display order.  bi: two-layer B, i.e. 0, 2, 1, 4, 3, ... (odd tail last)."""
    if direction == "uni":
        return list(range(n))
    order = [0]
    for k in range(2, n, 2):
        order += [k, k - 1]
    if n % 2 == 0 and n > 1:
        order.append(n - 1)
    return order


def plane_psnr(a: np.ndarray, b: np.ndarray) -> float:
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    return 100.0 if mse == 0 else min(100.0, 10.0 * np.log10(255.0**2 / mse))


@dataclass
class FrameRecord:
    poc: int
    bits: float
    psnr: tuple[float, float, float]
    mode_share: dict[str, float]  # percent of luma area
    decisions: list = field(repr=False)
    dnn_refs: tuple[int, int] | None = None
    replaced: Replacement | None = None


@dataclass
class SequenceResult:
    config: CodecConfig
    frames: list[FrameRecord]  # coding order
    recon: list[YUVFrame]  # display order

    @property
    def bits(self) -> float:
        return float(sum(f.bits for f in self.frames))

    @property
    def psnr_y(self) -> float:
        return float(np.mean([f.psnr[0] for f in self.frames]))

    def mean_psnr(self) -> tuple[float, float, float]:
        return tuple(float(np.mean([f.psnr[i] for f in self.frames])) for i in range(3))

    def mode_share(self) -> dict[str, float]:
        tot = {m: 0.0 for m in MODES}
        for f in self.frames:
            for m, v in f.mode_share.items():
                tot[m] += v / len(self.frames)
        return tot


def _mode_share(decisions, lists, width, height) -> dict[str, float]:
    area = {m: 0 for m in MODES}
    for d in decisions:
        if d.mode in ("Inter", "DnnWithMv", "Skip"):
            for p in d.parts:
                label = d.mode
                if d.mode != "Skip":
                    label = "DnnWithMv" if lists.get(p.list_index)[p.ref_index].dnn else "Inter"
                area[label] += p.rect[2] * p.rect[3]
        else:
            area[d.mode] += d.rect[2] * d.rect[3]
    return {m: 100.0 * a / (width * height) for m, a in area.items()}


def _check_frames(frames):
    if len(frames) < 3:
        raise ValueError(f"need at least 3 frames, got {len(frames)}")
    w, h = frames[0].width, frames[0].height
    if w % ALIGN or h % ALIGN:
        raise ValueError(f"frame size {w}x{h} must be a multiple of {ALIGN}")
    for f in frames:
        if (f.width, f.height) != (w, h) or f.u.shape != (h // 2, w // 2) or f.v.shape != (h // 2, w // 2):
            raise ValueError("all frames must be 4:2:0 with identical dimensions")
    return w, h


def _frame_setup(dpb, poc, cfg: CodecConfig, predictor):
    """Lists and DNN frame for ``poc``; identical on both sides of the channel."""
    if not dpb:
        return None, None, None, None
    lists = build_lists(dpb, poc, cfg.direction)
    xhat = pair = repl = None
    if cfg.mode != "baseline" and predictor is not None:
        pair = can_predict(dpb, poc, cfg.direction)
        if pair is not None:
            t1, t2 = pair
            xhat = predictor(dpb[t1], dpb[t2], t1, t2, poc)
    if cfg.mode == "dm-rlu" and xhat is not None:
        lists, repl = rlu_update(lists, Ref(poc, xhat))
    return lists, xhat, pair, repl


def encode_sequence(frames, config: CodecConfig, predictor=None) -> SequenceResult:
    """Code ``frames`` (display order) and collect rate, PSNR and mode shares.

    ``predictor(ref1, ref2, t1, t2, t)`` returns the DNN frame for POC ``t``
    from decoded frames; it is ignored in ``baseline`` mode.
    """
    width, height = _check_frames(frames)
    dpb: dict[int, YUVFrame] = {}
    records = []
    for poc in coding_order(len(frames), config.direction):
        lists, xhat, pair, repl = _frame_setup(dpb, poc, config, predictor)
        recon, decisions, bits = encode_frame(frames[poc], lists, xhat, config)
        psnr = tuple(plane_psnr(a, b) for a, b in zip(frames[poc], recon))
        share = _mode_share(decisions, lists, width, height)
        for d in decisions:
            d.recon = None
        records.append(FrameRecord(poc, bits, psnr, share, decisions, pair, repl))
        dpb[poc] = recon
    return SequenceResult(config, records, [dpb[p] for p in range(len(frames))])


def decode_sequence(result: SequenceResult, width: int, height: int, predictor=None) -> list[YUVFrame]:
    """Decoder-side replay: lists, DNN frames and reconstructions from decisions only."""
    cfg = result.config
    dpb: dict[int, YUVFrame] = {}
    for rec in result.frames:
        lists, xhat, _, _ = _frame_setup(dpb, rec.poc, cfg, predictor)
        dpb[rec.poc] = decode_frame(rec.decisions, lists, xhat, width, height, cfg.step)
    return [dpb[p] for p in sorted(dpb)]


def encode_at_psnr(frames, config: CodecConfig, target: float, predictor=None, tol: float = 0.1,
                   lo: float = 0.0, hi: float = 51.0, max_iter: int = 20) -> SequenceResult:
    """Bisect a fractional QP until mean PSNR-Y is within ``tol`` dB of ``target``.

    Raises if the target is not bracketed or not reached.
    """
    from dataclasses import replace

    def run(qp):
        return encode_sequence(frames, replace(config, qp=qp), predictor)

    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        res = run(mid)
        if abs(res.psnr_y - target) <= tol:
            return res
        if res.psnr_y > target:
            lo = mid
        else:
            hi = mid
    raise RuntimeError(f"could not reach PSNR-Y {target:.3f} +- {tol} (last qp {mid:.3f}, psnr {res.psnr_y:.3f})")


def rate_at_psnr(frames, config: CodecConfig, target: float, predictor=None, tol: float = 0.1,
                 lo: float = 0.0, hi: float = 51.0, max_iter: int = 24) -> tuple[float, SequenceResult, SequenceResult]:
    """Total bits at exactly ``target`` PSNR-Y.

    Bisects a fractional QP until one run lands at or above the target and
    one at or below, both within ``tol`` dB, then interpolates log-rate
    linearly in PSNR between them.  PSNR is not strictly monotone in QP, so
    when no such pair turns up the closest run within ``tol`` is used
    as is.  Returns ``(bits, upper_run, lower_run)``.
    """
    from dataclasses import replace

    above = below = None
    runs = []
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        res = encode_sequence(frames, replace(config, qp=mid), predictor)
        runs.append(res)
        if res.psnr_y >= target:
            lo = mid
            if above is None or res.psnr_y < above.psnr_y:
                above = res
        else:
            hi = mid
            if below is None or res.psnr_y > below.psnr_y:
                below = res
        if above is not None and below is not None and above.psnr_y - target <= tol and target - below.psnr_y <= tol:
            break
    else:
        best = min(runs, key=lambda r: abs(r.psnr_y - target))
        if abs(best.psnr_y - target) > tol:
            raise RuntimeError(f"could not reach PSNR-Y {target:.3f} +- {tol} (closest {best.psnr_y:.3f})")
        return best.bits, best, best
    if above.psnr_y == below.psnr_y:
        return above.bits, above, below
    frac = (target - below.psnr_y) / (above.psnr_y - below.psnr_y)
    bits = float(np.exp(np.log(below.bits) + frac * (np.log(above.bits) - np.log(below.bits))))
    return bits, above, below


def report(result: SequenceResult) -> str:
    """Line-oriented text: one line per coded frame, then totals."""
    lines = [f"# qp={result.config.qp} mode={result.config.mode} direction={result.config.direction}"]
    cols = " ".join(f"{m.lower()}%" for m in MODES)
    lines.append(f"poc bits psnr_y psnr_u psnr_v {cols}")
    for f in sorted(result.frames, key=lambda r: r.poc):
        share = " ".join(f"{f.mode_share[m]:.2f}" for m in MODES)
        lines.append(f"{f.poc} {f.bits:.1f} {f.psnr[0]:.4f} {f.psnr[1]:.4f} {f.psnr[2]:.4f} {share}")
    py, pu, pv = result.mean_psnr()
    share = " ".join(f"{v:.2f}" for v in result.mode_share().values())
    lines.append(f"total {result.bits:.1f} {py:.4f} {pu:.4f} {pv:.4f} {share}")
    return "\n".join(lines) + "\n"
