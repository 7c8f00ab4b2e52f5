"""``codec-sim`` command line."""

from __future__ import annotations

import argparse
import sys

from ..yuv import read_frames
from .encoder import CODEC_MODES, CodecConfig, encode_sequence, report
from .refs import DIRECTIONS


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="codec-sim", description="Toy block codec with DNN-predicted reference frames.")
    p.add_argument("--input", required=True, help="raw YUV 4:2:0 8-bit file")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--frames", type=int, default=None, help="number of frames (default: all)")
    p.add_argument("--qp", type=float, default=32)
    p.add_argument("--mode", choices=CODEC_MODES, default="baseline")
    p.add_argument("--direction", choices=DIRECTIONS, default="uni")
    p.add_argument("--block", type=int, default=64)
    p.add_argument("--weights", help="trained predictor weights (required for dm and dm-rlu unless --ideal-shift)")
    p.add_argument("--ideal-shift", nargs=2, type=float, metavar=("DX", "DY"),
                   help="use the ideal global-shift predictor instead of a network")
    p.add_argument("--report", help="write the text report here (default: stdout)")
    return p


def make_predictor(args):
    if args.mode == "baseline":
        return None
    if args.ideal_shift:
        from .predictors import ShiftPredictor

        return ShiftPredictor(*args.ideal_shift)
    if not args.weights:
        raise SystemExit("codec-sim: --mode dm/dm-rlu needs --weights or --ideal-shift")
    from ..model import FramePredictor
    from .predictors import ModelPredictor

    model, _, _ = FramePredictor.load(args.weights, direction=args.direction)
    return ModelPredictor(model)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        frames = read_frames(args.input, args.width, args.height, args.frames)
        cfg = CodecConfig(qp=args.qp, mode=args.mode, direction=args.direction, block=args.block)
        result = encode_sequence(frames, cfg, make_predictor(args))
    except (ValueError, OSError) as exc:
        print(f"codec-sim: {exc}", file=sys.stderr)
        return 2
    text = report(result)
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
