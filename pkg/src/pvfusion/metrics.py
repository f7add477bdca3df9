"""Depth-map evaluation metrics and report formatting."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, EmptyValidSetError


@dataclass
class EvalReport:
    l1_rel: float
    l2_rel: float
    rmse: float
    valid_pixel_count: int


def evaluate(pred: np.ndarray, gt: np.ndarray) -> EvalReport:
    """L1-rel, L2-rel and RMSE over pixels where gt is valid (> 0, finite).

    l1_rel = mean(|p - g| / g); l2_rel = mean((p - g)^2 / g);
    rmse = sqrt(mean((p - g)^2)).
    """
    if pred.shape != gt.shape:
        raise DimensionMismatchError("prediction and ground truth dimensions differ")
    valid = np.isfinite(gt) & (gt > 0)
    n = int(valid.sum())
    if n == 0:
        raise EmptyValidSetError("no valid ground-truth pixels")
    p = pred[valid]
    g = gt[valid]
    err = p - g
    return EvalReport(
        l1_rel=float(np.mean(np.abs(err) / g)),
        l2_rel=float(np.mean(err * err / g)),
        rmse=float(np.sqrt(np.mean(err * err))),
        valid_pixel_count=n,
    )


def format_table(rows: list[tuple[str, str, EvalReport]], title: str = "") -> str:
    """Aligned plain-text table of (group, system, report) rows."""
    out = io.StringIO()
    if title:
        out.write(title + "\n")
    header = f"{'Sequence':<16} {'System':<20} {'L1-rel':>8} {'L2-rel':>8} {'RMSE':>8}"
    out.write(header + "\n")
    out.write("-" * len(header) + "\n")
    for group, system, rep in rows:
        out.write(
            f"{group:<16} {system:<20} {rep.l1_rel:>8.3f} {rep.l2_rel:>8.3f} {rep.rmse:>8.3f}\n"
        )
    return out.getvalue()


def format_csv(rows: list[tuple[str, str, EvalReport]]) -> str:
    lines = ["sequence,system,l1_rel,l2_rel,rmse,valid_pixels"]
    for group, system, rep in rows:
        lines.append(
            f"{group},{system},{rep.l1_rel:.6f},{rep.l2_rel:.6f},{rep.rmse:.6f},{rep.valid_pixel_count}"
        )
    return "\n".join(lines) + "\n"
