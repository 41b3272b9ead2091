"""CLI: export encoders to ONNX and run parity checks against the source."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from . import clip_visual, resnet50
from .export import ExportError, export_clip_visual, export_resnet50_penultimate
from .parity import parity_check

ENCODERS = {
    "resnet50": (resnet50.ENCODER_ID, export_resnet50_penultimate,
                 resnet50.load_source_model, None),
    "clip-vit-b32": (clip_visual.ENCODER_ID, export_clip_visual,
                     clip_visual.load_source_model, clip_visual.IMAGE_SIZE),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="encoder-export",
        description="Convert pretrained image encoders to ONNX and verify parity.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="emit <encoder_id>.onnx + manifest")
    p.add_argument("encoder", choices=sorted(ENCODERS))
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--random-init", action="store_true",
                   help="use seeded random weights instead of downloading the checkpoint")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("parity", help="max-abs deviation between torch and the graph")
    p.add_argument("encoder", choices=sorted(ENCODERS))
    p.add_argument("--graph", required=True, help="path to the exported .onnx")
    p.add_argument("--random-init", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-samples", type=int, default=16)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    encoder_id, exporter, loader, side = ENCODERS[args.encoder]
    try:
        if args.command == "export":
            out = Path(args.out) / f"{encoder_id}.onnx"
            manifest = exporter(out, pretrained=not args.random_init, seed=args.seed)
            print(json.dumps({"graph": str(out), **asdict(manifest)}, indent=2, sort_keys=True))
            return 0
        model, _ = loader(pretrained=not args.random_init, seed=args.seed)
        report = parity_check(args.graph, model, encoder_id, side,
                              n_samples=args.n_samples, seed=args.seed)
        print(json.dumps(asdict(report) | {"passed": report.passed}, indent=2, sort_keys=True))
        return 0 if report.passed else 1
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
