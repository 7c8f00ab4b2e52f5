"""``affinepred`` command line: train, predict, evaluate.

Patch files (``--ref1``, ``--ref2``, ``--out``) use the weight container
with a single ``patch`` tensor of shape ``(3, H, W)``; ``.npy`` files are
accepted too.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import weights as wio
from .affine import dump_motion
from .model import FramePredictor
from .tensor import Tensor
from .train import evaluate, format_config, load_config, make_datasets, parse_config, train

log = logging.getLogger("affinepred")


def read_patch(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".npy":
        arr = np.load(path)
    else:
        tensors, _ = wio.load(path)
        if "patch" not in tensors:
            raise ValueError(f"{path}: no 'patch' tensor")
        arr = tensors["patch"]
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ValueError(f"{path}: expected a (3, H, W) patch, got {arr.shape}")
    return arr


def write_patch(path, arr: np.ndarray) -> None:
    path = Path(path)
    if path.suffix == ".npy":
        np.save(path, arr)
    else:
        wio.save(path, {"patch": np.asarray(arr)})


def cmd_train(args) -> int:
    cfg = load_config(args.config) if args.config else parse_config("")
    log.info("training with\n%s", format_config(cfg))
    result = train(cfg)
    blob = result.save(args.out)
    manifest = result.manifest(blob)
    Path(args.manifest or str(args.out) + ".manifest").write_text(manifest)
    sys.stdout.write(manifest)
    return 0


def cmd_predict(args) -> int:
    model, _, _ = FramePredictor.load(args.weights, direction=args.direction)
    p1, p2 = read_patch(args.ref1), read_patch(args.ref2)
    pred = model.forward(*(Tensor(np.asarray(p, dtype=model.dtype)[None]) for p in (p1, p2)))
    write_patch(args.out, pred.output.data[0])
    if args.motion:
        dump_motion(args.motion, pred.grids[0].data)
    return 0


def cmd_evaluate(args) -> int:
    model, _, meta = FramePredictor.load(args.weights)
    text = "\n".join(f"{k[6:]} = {v}" for k, v in meta.items() if k.startswith("train."))
    cfg = parse_config(text)
    _, val = make_datasets(cfg)
    ev = evaluate(model, val, cfg.batch_size)
    print(ev.table())
    if args.manifest:
        blob = Path(args.weights).read_bytes()
        lines = [f"{k[6:]}={v}" for k, v in meta.items() if k.startswith("train.")]
        lines += [f"val_psnr_y={ev.mean:.4f}", f"val_copy_ref1_psnr_y={ev.baseline_mean:.4f}",
                  f"weights_hash={wio.content_hash(blob)}"]
        Path(args.manifest).write_text("\n".join(lines) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="affinepred", description="Affine-motion frame predictor.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train on synthetic triplets")
    t.add_argument("--config", help="flat key = value file (see README)")
    t.add_argument("--out", required=True, help="weights file to write")
    t.add_argument("--manifest", help="run manifest path (default: <out>.manifest)")
    t.set_defaults(func=cmd_train)

    q = sub.add_parser("predict", help="predict one patch from two references")
    q.add_argument("--weights", required=True)
    q.add_argument("--ref1", required=True)
    q.add_argument("--ref2", required=True)
    q.add_argument("--direction", choices=("uni", "bi"), required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--motion", help="also write the ref1 motion field (float32 dx, dy planes)")
    q.set_defaults(func=cmd_predict)

    e = sub.add_parser("evaluate", help="Y-PSNR on the validation triplets named in the weights metadata")
    e.add_argument("--weights", required=True)
    e.add_argument("--manifest", help="write a manifest with the results")
    e.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"affinepred: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
