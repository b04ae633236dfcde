"""Command line entry point: ``bcsnet {train,eval,predict,gradcheck,synth,viz}``.

Exit status is 0 on success; failures print one ``error: <Type>: <message>``
line to stderr and exit 1 (2 for usage errors, as argparse does).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import load_config


def _train(args):
    from .training import train
    cfg = load_config(args.config)
    out = Path(args.out or cfg.out_dir)
    ckpt, curve = train(cfg, out_dir=out)
    final = curve.totals[-1] if len(curve) else float("nan")
    print(json.dumps({"checkpoint": str(out / "ckpt.npz"), "epochs": ckpt.epoch, "final_loss": final}))


def _eval(args):
    from .checkpoint import load_checkpoint
    from .training import evaluate
    report = evaluate(load_checkpoint(args.ckpt), args.data, args.out)
    print(json.dumps({"csv": args.out, "n": len(report.rows), **report.means}))


def _predict(args):
    from .checkpoint import load_checkpoint
    from .training import mask_path_for, predict
    mask, _ = predict(load_checkpoint(args.ckpt), args.image, args.out)
    print(json.dumps({"probability": args.out, "mask": str(mask_path_for(args.out)),
                      "foreground": int(mask.sum())}))


def _gradcheck(args):
    from .gradcheck import gradcheck
    report = gradcheck(load_config(args.config), args.n, args.seed)
    print(report.summary())
    if not report.passed:
        raise RuntimeError("gradient mismatch: " + ",".join(report.failures))


def _synth(args):
    from .data import save_dataset, synth_blobs
    records = synth_blobs(args.n, (args.size, args.size), args.seed)
    save_dataset(records, args.out)
    print(json.dumps({"out": args.out, "n": len(records)}))


def _viz(args):
    from .checkpoint import load_checkpoint
    from .data import load_mask, load_slice, make_record
    from .training import model_from_checkpoint
    from .viz import visualize
    ckpt = load_checkpoint(args.ckpt)
    record = make_record(load_slice(args.image), load_mask(args.mask))
    if record.slice.shape != ckpt.config.image_size:
        raise ValueError(f"image is {record.slice.shape}, checkpoint expects {ckpt.config.image_size}")
    img = visualize(model_from_checkpoint(ckpt), record, args.out)
    print(json.dumps({"out": args.out, "width": img.shape[1], "height": img.shape[0]}))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bcsnet", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("train", help="train from a TOML config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="output directory (default: out_dir from the config)")
    s.set_defaults(func=_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint on <dir>/images + <dir>/masks")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True, help="CSV report path")
    s.set_defaults(func=_eval)

    s = sub.add_parser("predict", help="write S2 probability and 0.5 mask PNGs")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--image", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_predict)

    s = sub.add_parser("gradcheck", help="finite-difference check on a tiny double-precision model")
    s.add_argument("--config", required=True)
    s.add_argument("--n", type=int, default=50)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=_gradcheck)

    s = sub.add_parser("synth", help="write a synthetic blob dataset")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_synth)

    s = sub.add_parser("viz", help="six-panel visualisation of one slice")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--image", required=True)
    s.add_argument("--mask", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_viz)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001
        msg = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
