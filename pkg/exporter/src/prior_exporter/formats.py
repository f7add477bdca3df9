"""Writers for the PVOL1 / NRML1 / OBND1 binary formats.

Implemented independently of the consumer package on purpose: the byte
layout is the interchange contract, and the interchange tests prove that
files written here load there. All values little-endian.

  PVOL1: "PVOL1" | uint32 width, height, k_count | float64 d_min, d_max |
         float32 payload, row-major pixels, bin index fastest.
  NRML1: "NRML1" | uint32 width, height | float32 x3 per pixel.
  OBND1: "OBND1" | uint32 width, height | float32 per pixel.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

PVOL_HEADER = struct.Struct("<5sIIIdd")
MAP_HEADER = struct.Struct("<5sII")


def write_prior(
    probs: np.ndarray, d_min: float, d_max: float, path: str | Path
) -> None:
    """Write an (H, W, K) array of per-pixel bin probabilities.

    Rays are normalized in float64 before the float32 cast, which keeps the
    stored sums within ~1e-6 of one; the consumer re-normalizes anything
    within its 1e-4 tolerance.
    """
    h, w, k = probs.shape
    rays = np.asarray(probs, dtype=np.float64).reshape(-1, k)
    sums = rays.sum(axis=1, keepdims=True)
    if np.any(sums <= 0) or not np.all(np.isfinite(rays)):
        raise ValueError("probabilities must be finite with positive ray sums")
    payload = (rays / sums).astype("<f4").tobytes()
    header = PVOL_HEADER.pack(b"PVOL1", w, h, k, float(d_min), float(d_max))
    Path(path).write_bytes(header + payload)


def write_normals(normals: np.ndarray, path: str | Path) -> None:
    """Write an (H, W, 3) normal map. Values pass through unvalidated: the
    consumer's loader is the gatekeeper for unit length."""
    h, w, _ = normals.shape
    header = MAP_HEADER.pack(b"NRML1", w, h)
    Path(path).write_bytes(header + np.asarray(normals).astype("<f4").tobytes())


def write_boundary(prob: np.ndarray, path: str | Path) -> None:
    """Write an (H, W) occlusion-boundary probability map in [0, 1]."""
    h, w = prob.shape
    header = MAP_HEADER.pack(b"OBND1", w, h)
    Path(path).write_bytes(header + np.asarray(prob).astype("<f4").tobytes())
