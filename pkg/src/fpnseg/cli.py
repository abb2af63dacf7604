"""Command-line interface: train, predict, score, synth, encode, decode."""
import argparse
import os
import sys

import numpy as np
from PIL import Image

from . import report as report_mod
from .checkpoint import model_from_checkpoint
from .codec import argmax_labels, decode_mask, encode_mask
from .data import list_pairs, load_dataset, read_image, write_image, write_mask
from .errors import DataError, FpnsegError
from .infer import predict, tta_predict
from .losses import IoUAccumulator
from .model import build_model
from .rng import RngStream
from .runconfig import load_run_config
from .synth import generate_dataset
from .train import train


def _overrides(args):
    out = {}
    if getattr(args, "seed", None) is not None:
        out["seed"] = args.seed
    if getattr(args, "iterations", None) is not None:
        out["iterations"] = args.iterations
    if getattr(args, "preset", None) is not None:
        out["preset"] = args.preset
    return out


def cmd_train(args):
    cfg = load_run_config(args.config, _overrides(args))
    samples = load_dataset(args.data)
    os.makedirs(args.out, exist_ok=True)
    start = 0
    if args.checkpoint:
        from .checkpoint import load_checkpoint, restore_model

        ck_cfg, tensors, step = load_checkpoint(args.checkpoint)
        model = restore_model(build_model(ck_cfg), tensors, step)
        start = step
    else:
        model = build_model(cfg.model, RngStream(cfg.train.seed))
    log_path = os.path.join(args.out, "train.log")
    with open(log_path, "a" if start else "w") as fh:
        log = train(
            model,
            samples,
            cfg.train,
            aug_config=cfg.augment,
            out_dir=args.out,
            log_file=fh,
            start_iteration=start,
        )
    report_mod.render_training_figures(log, args.out)
    best = log.checkpoints[0] if log.checkpoints else None
    if best:
        print(f"best: iteration {best[0]} mean IoU {best[1]:.4f} -> {best[2]}")
    print(f"log: {log_path}")
    return 0


def _input_images(path):
    if os.path.isdir(path):
        names = sorted(n for n in os.listdir(path) if n.endswith("_sat.png"))
        if not names:
            raise DataError(f"no *_sat.png images found in {path}")
        return [(n[: -len("_sat.png")], os.path.join(path, n)) for n in names]
    if not os.path.exists(path):
        raise DataError(f"no such image: {path}")
    base = os.path.basename(path)
    stem = base[: -len("_sat.png")] if base.endswith("_sat.png") else os.path.splitext(base)[0]
    return [(stem, path)]


def cmd_predict(args):
    model = model_from_checkpoint(args.checkpoint)
    os.makedirs(args.out, exist_ok=True)
    fn = tta_predict if args.tta else predict
    for stem, path in _input_images(args.input):
        probs = fn(model, read_image(path))
        out_path = os.path.join(args.out, f"{stem}_mask.png")
        write_mask(out_path, argmax_labels(probs))
        print(out_path)
    return 0


def cmd_score(args):
    pred_pairs = {
        n[: -len("_mask.png")]: os.path.join(args.pred, n)
        for n in sorted(os.listdir(args.pred))
        if n.endswith("_mask.png")
    }
    truth_pairs = {
        n[: -len("_mask.png")]: os.path.join(args.truth, n)
        for n in sorted(os.listdir(args.truth))
        if n.endswith("_mask.png")
    }
    if not pred_pairs:
        raise DataError(f"no *_mask.png files found in {args.pred}")
    acc = IoUAccumulator()
    for stem, pred_path in pred_pairs.items():
        if stem not in truth_pairs:
            raise DataError(f"no ground-truth mask for {pred_path}")
        with Image.open(pred_path) as im:
            pred = decode_mask(np.asarray(im.convert("RGB")))
        with Image.open(truth_pairs[stem]) as im:
            truth = decode_mask(np.asarray(im.convert("RGB")))
        acc.add(pred, truth)
    rep = acc.report()
    from .codec import CLASS_NAMES

    for name, v in zip(CLASS_NAMES, rep.per_class):
        print(f"{name}\t{'nan' if v is None else f'{v:.6f}'}")
    print(f"mean\t{rep.mean:.6f}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        tsv = os.path.join(args.out, "iou.tsv")
        with open(tsv, "w") as fh:
            for name, v in zip(CLASS_NAMES, rep.per_class):
                fh.write(f"{name}\t{'nan' if v is None else f'{v:.6f}'}\n")
            fh.write(f"mean\t{rep.mean:.6f}\n")
        report_mod.render_iou_figure(rep, os.path.join(args.out, "iou.png"))
    return 0


def cmd_synth(args):
    generate_dataset(args.out, args.n, args.size, args.seed or 0)
    print(f"wrote {args.n} image/mask pairs to {args.out}")
    return 0


def cmd_encode(args):
    with Image.open(args.input) as im:
        labels = np.asarray(im.convert("L"))
    if labels.max() > 6:
        raise DataError(f"{args.input}: label values exceed 6")
    write_image(args.output, encode_mask(labels))
    return 0


def cmd_decode(args):
    with Image.open(args.input) as im:
        labels = decode_mask(np.asarray(im.convert("RGB")))
    Image.fromarray(labels, mode="L").save(args.output)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="fpnseg", description="FPN land segmentation toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model on paired *_sat.png/*_mask.png data")
    t.add_argument("--config", help="key=value run configuration file")
    t.add_argument("--data", required=True, help="dataset directory")
    t.add_argument("--out", required=True, help="output directory for checkpoints/logs/figures")
    t.add_argument("--checkpoint", help="resume from a checkpoint")
    t.add_argument("--seed", type=int)
    t.add_argument("--iterations", type=int)
    t.add_argument("--preset", choices=["tiny", "resnet50"])
    t.set_defaults(fn=cmd_train)

    pr = sub.add_parser("predict", help="predict masks for images")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--out", required=True)
    pr.add_argument("--tta", action="store_true", help="average over the four 90-degree rotations")
    pr.add_argument("input", help="a *_sat.png image or a directory of them")
    pr.set_defaults(fn=cmd_predict)

    sc = sub.add_parser("score", help="per-class and mean IoU of predicted vs true masks")
    sc.add_argument("--out", help="also write iou.tsv and iou.png here")
    sc.add_argument("pred", help="directory of predicted *_mask.png")
    sc.add_argument("truth", help="directory of ground-truth *_mask.png")
    sc.set_defaults(fn=cmd_score)

    sy = sub.add_parser("synth", help="generate a synthetic dataset")
    sy.add_argument("--out", required=True)
    sy.add_argument("--n", type=int, default=8)
    sy.add_argument("--size", type=int, default=96)
    sy.add_argument("--seed", type=int, default=0)
    sy.set_defaults(fn=cmd_synth)

    en = sub.add_parser("encode", help="grayscale label-index PNG -> RGB mask")
    en.add_argument("input")
    en.add_argument("output")
    en.set_defaults(fn=cmd_encode)

    de = sub.add_parser("decode", help="RGB mask -> grayscale label-index PNG")
    de.add_argument("input")
    de.add_argument("output")
    de.set_defaults(fn=cmd_decode)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except FpnsegError as e:
        print(str(e), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
