"""Command-line entry points: train, enhance, evaluate, bdrate."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import torch

from .evaluate import (
    evaluate_sequences,
    model_enhancer,
    read_eval_manifest,
    read_rd_csv,
    write_bdrate_csv,
    write_report_csv,
)
from .metrics import bd_rate
from .model import HVPPNet, enhance_frame, load_checkpoint
from .training import parse_config_file, train
from .yuv import YuvSequence, write_yuv420


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hvppnet",
        description="Hybrid-attention post-processing for compressed video.",
    )
    parser.add_argument("--deterministic", action="store_true", help="bit-reproducible mode")
    parser.add_argument("--seed", type=int, default=None, help="override the RNG seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a manifest")
    p_train.add_argument("--config", required=True, help="key=value config file")
    p_train.add_argument("--manifest", required=True, help="training manifest")
    p_train.add_argument("--out", required=True, help="output directory")

    p_enh = sub.add_parser("enhance", help="restore every frame of a raw YUV file")
    p_enh.add_argument("--ckpt", required=True, help="checkpoint file")
    p_enh.add_argument("--in", dest="input", required=True, help="input 4:2:0 file")
    p_enh.add_argument("--size", required=True, help="frame size as WxH")
    p_enh.add_argument("--qp", type=int, required=True, help="quantization parameter")
    p_enh.add_argument("--out", required=True, help="output 4:2:0 file")

    p_eval = sub.add_parser("evaluate", help="metrics + BD-rate over a manifest")
    p_eval.add_argument("--ckpt", required=True, help="checkpoint file")
    p_eval.add_argument("--manifest", required=True, help="evaluation manifest")
    p_eval.add_argument("--out", required=True, help="output directory")

    p_bd = sub.add_parser("bdrate", help="BD-rate between two RD CSVs")
    p_bd.add_argument("--anchor", required=True, help="anchor RD CSV (bitrate,quality)")
    p_bd.add_argument("--test", required=True, help="test RD CSV (bitrate,quality)")
    return parser


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w_s, h_s = text.lower().split("x")
        return int(w_s), int(h_s)
    except ValueError as exc:
        raise ValueError(f"bad --size {text!r}: expected WxH, e.g. 416x240") from exc


def _load_model(ckpt_path: str) -> HVPPNet:
    store = load_checkpoint(ckpt_path)
    model = HVPPNet(store.config)
    store.load_into(model)
    model.eval()
    return model


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.deterministic:
        torch.use_deterministic_algorithms(True)
        torch.set_num_threads(1)
    if args.seed is not None:
        torch.manual_seed(args.seed)

    try:
        if args.command == "train":
            model_cfg, train_cfg = parse_config_file(args.config)
            if args.seed is not None:
                train_cfg.seed = args.seed
            if args.deterministic:
                train_cfg.deterministic = True
            store = train(args.manifest, model_cfg, train_cfg, args.out)
            print(f"trained {store.step} steps; checkpoint in {args.out}")

        elif args.command == "enhance":
            width, height = _parse_size(args.size)
            model = _load_model(args.ckpt)
            seq = YuvSequence(args.input, width, height)
            if len(seq) == 0:
                raise ValueError(f"no {width}x{height} frames in {args.input}")
            for i in range(len(seq)):
                restored = enhance_frame(seq.read_frame(i), args.qp, model)
                write_yuv420(restored, args.out, append=i > 0)
            print(f"enhanced {len(seq)} frame(s) -> {args.out}")

        elif args.command == "evaluate":
            model = _load_model(args.ckpt)
            entries = read_eval_manifest(args.manifest)
            rows, bd_psnr, bd_msssim = evaluate_sequences(entries, model_enhancer(model))
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            write_report_csv(rows, str(out / "report.csv"))
            write_bdrate_csv(bd_psnr, bd_msssim, str(out / "bdrate_summary.csv"))
            for c in ("Y", "U", "V"):
                print(
                    f"{c}: BD-rate(PSNR) {bd_psnr[c]:+.4f}%  "
                    f"BD-rate(MS-SSIM) {bd_msssim[c]:+.4f}%"
                )

        elif args.command == "bdrate":
            anchor = read_rd_csv(args.anchor, "anchor")
            test = read_rd_csv(args.test, "test")
            print(f"BD-rate: {bd_rate(anchor, test):+.4f}%")

    except (ValueError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
