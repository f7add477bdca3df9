"""Command line: glob images (and optional depth maps), run a model, write
PVOL1/NRML1/OBND1 files the reconstruction pipeline loads directly.

    prior-exporter --images 'seq/rgb/*.png' --model uniform --out priors/
    prior-exporter --images 'seq/rgb/*.png' --depths 'seq/depth/*.png' \
                   --model onehot-gt --out priors/ --emit-normals

Errors exit nonzero with one line on stderr: error: <kind>: <message>.
"""

from __future__ import annotations

import argparse
import glob
import sys
from pathlib import Path

from .export import DEFAULT_HEIGHT, DEFAULT_WIDTH, ExportJob, ShapeMismatchError, export
from .models import Binning, ModelLoadError


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="prior-exporter", description=__doc__)
    p.add_argument("--images", required=True, help="glob for input RGB images")
    p.add_argument("--depths", help="glob for aligned ground-truth depth PNGs")
    p.add_argument("--model", default="uniform",
                   help="uniform | onehot-gt | torchscript:<path>")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--bins", type=int, default=64)
    p.add_argument("--d-min", type=float, default=0.1, dest="d_min")
    p.add_argument("--d-max", type=float, default=12.0, dest="d_max")
    p.add_argument("--width", type=int, default=DEFAULT_WIDTH)
    p.add_argument("--height", type=int, default=DEFAULT_HEIGHT)
    p.add_argument("--emit-normals", action="store_true")
    p.add_argument("--emit-boundaries", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    images = [Path(p) for p in sorted(glob.glob(args.images))]
    if not images:
        print(f"error: NoInput: no images match {args.images!r}", file=sys.stderr)
        return 1
    depths = None
    if args.depths:
        depths = [Path(p) for p in sorted(glob.glob(args.depths))]
    job_kwargs = dict(
        images=images,
        depths=depths,
        output_dir=Path(args.out),
        model_id=args.model,
        binning=Binning(k_count=args.bins, d_min=args.d_min, d_max=args.d_max),
        width=args.width,
        height=args.height,
        emit_normals=args.emit_normals,
        emit_boundaries=args.emit_boundaries,
    )
    try:
        written = export(ExportJob(**job_kwargs))
    except (ModelLoadError, ShapeMismatchError, FileNotFoundError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(written)} prior volumes to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
