"""Batch export: run a model over keyframe images, write binary outputs."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from . import formats
from .models import Binning, load_model

# The consumer pipeline runs at this resolution with this discretization;
# exports default to the same so files slot in without resampling.
DEFAULT_WIDTH = 256
DEFAULT_HEIGHT = 192
DEFAULT_BINNING = Binning(k_count=64, d_min=0.1, d_max=12.0)

TUM_DEPTH_SCALE = 5000.0


class ShapeMismatchError(RuntimeError):
    pass


@dataclass
class ExportJob:
    images: list[Path]
    output_dir: Path
    model_id: str = "uniform"
    depths: list[Path] | None = None
    binning: Binning = field(default_factory=lambda: DEFAULT_BINNING)
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT
    emit_normals: bool = False
    emit_boundaries: bool = False

    def __post_init__(self):
        if self.depths is not None and len(self.depths) != len(self.images):
            raise ShapeMismatchError(
                f"{len(self.images)} images but {len(self.depths)} depth maps"
            )


def _resize_rgb(img: np.ndarray, w: int, h: int) -> np.ndarray:
    return cv2.resize(img, (w, h), interpolation=cv2.INTER_AREA)


def _resize_depth_nearest(depth: np.ndarray, w: int, h: int) -> np.ndarray:
    """Nearest-pixel depth resize with the consumer's center-mapping rule."""
    sh, sw = depth.shape
    ys = np.clip(np.round((np.arange(h) + 0.5) * sh / h - 0.5).astype(np.int64), 0, sh - 1)
    xs = np.clip(np.round((np.arange(w) + 0.5) * sw / w - 0.5).astype(np.int64), 0, sw - 1)
    return depth[np.ix_(ys, xs)]


def _load_depth(path: Path) -> np.ndarray:
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FileNotFoundError(f"cannot read depth: {path}")
    return raw.astype(np.float64) / TUM_DEPTH_SCALE


def export(job: ExportJob) -> list[Path]:
    """Run the model over every image; returns the PVOL1 paths written."""
    model = load_model(job.model_id, job.binning)
    job.output_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for i, image_path in enumerate(job.images):
        bgr = cv2.imread(str(image_path), cv2.IMREAD_COLOR)
        if bgr is None:
            raise FileNotFoundError(f"cannot read image: {image_path}")
        rgb = _resize_rgb(cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB), job.width, job.height)
        gt = None
        if job.depths is not None:
            gt = _resize_depth_nearest(_load_depth(job.depths[i]), job.width, job.height)

        out = model.infer(rgb, gt)
        probs = out["probs"]
        if probs.shape != (job.height, job.width, job.binning.k_count):
            raise ShapeMismatchError(
                f"model probs shape {probs.shape}, expected "
                f"({job.height}, {job.width}, {job.binning.k_count})"
            )
        prior_path = job.output_dir / f"prior_{i:06d}.pvol"
        formats.write_prior(probs, job.binning.d_min, job.binning.d_max, prior_path)
        written.append(prior_path)

        if job.emit_normals:
            if "normals" not in out:
                raise ShapeMismatchError(f"model {job.model_id} emits no normals")
            formats.write_normals(out["normals"], job.output_dir / f"normals_{i:06d}.nrml")
        if job.emit_boundaries:
            if "boundary" not in out:
                raise ShapeMismatchError(f"model {job.model_id} emits no boundaries")
            formats.write_boundary(out["boundary"], job.output_dir / f"boundary_{i:06d}.obnd")
    return written
