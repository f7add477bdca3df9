"""Plane-sweep photometric cost volume and its probability conversion.

Images are plain arrays: color (H, W, 3) in any numeric dtype, grayscale
(H, W) float64. Photometric evidence accumulates across reference frames
into one cost volume per keyframe; conversion to probabilities happens once
per query, from the per-bin mean cost.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DimensionMismatchError
from .geometry import DepthBinning, Intrinsics, Pose
from .volume import ProbabilityVolume

STD_GUARD = 1e-8
SHIFT_LINEAR_EPS = 1e-6

LUMA = (0.299, 0.587, 0.114)


@dataclass
class PhotoCostVolume:
    """Accumulated squared patch errors plus per-bin valid-sample counts."""

    binning: DepthBinning
    cost: np.ndarray  # (H, W, K) float64
    sample_count: np.ndarray  # (H, W, K) int32

    @property
    def height(self) -> int:
        return self.cost.shape[0]

    @property
    def width(self) -> int:
        return self.cost.shape[1]


def empty_cost_volume(width: int, height: int, binning: DepthBinning) -> PhotoCostVolume:
    return PhotoCostVolume(
        binning,
        np.zeros((height, width, binning.k_count)),
        np.zeros((height, width, binning.k_count), dtype=np.int32),
    )


def normalize_image(rgb: np.ndarray) -> np.ndarray:
    """Luminance grayscale standardized to zero mean, unit std.

    Constant images (std below a small guard) come back as all zeros.
    """
    img = np.asarray(rgb, dtype=np.float64)
    if img.ndim == 3:
        gray = LUMA[0] * img[..., 0] + LUMA[1] * img[..., 1] + LUMA[2] * img[..., 2]
    elif img.ndim == 2:
        gray = img
    else:
        raise DimensionMismatchError("expected (H, W) or (H, W, 3) image")
    std = gray.std()
    if std < STD_GUARD:
        return np.zeros_like(gray)
    return (gray - gray.mean()) / std


def accumulate_cost(
    cost_vol: PhotoCostVolume,
    keyframe: np.ndarray,
    reference: np.ndarray,
    kf_from_ref_pose: Pose,
    intrinsics: Intrinsics,
) -> PhotoCostVolume:
    """Add one reference frame's plane-sweep evidence to the cost volume.

    For each keyframe pixel and bin midpoint, the keyframe pixel backprojects,
    moves into the reference camera, and projects; when the full 3x3 warped
    patch lands inside the reference image (in front of the camera), the
    patch SSD adds to cost and sample_count increments. Mutates and returns
    cost_vol.
    """
    h, w = keyframe.shape
    if reference.shape != (h, w) or (cost_vol.height, cost_vol.width) != (h, w):
        raise DimensionMismatchError("keyframe, reference and cost volume dimensions differ")
    ref_from_kf = kf_from_ref_pose.inverse()
    _kernels.accumulate_cost(
        cost_vol.cost,
        cost_vol.sample_count,
        keyframe,
        reference,
        ref_from_kf.rotation,
        ref_from_kf.translation,
        intrinsics.fx,
        intrinsics.fy,
        intrinsics.cx,
        intrinsics.cy,
        cost_vol.binning.midpoints,
    )
    return cost_vol


def cost_to_probability(
    cost_vol: PhotoCostVolume, mode: str = "shift-linear", beta: float = 1.0
) -> ProbabilityVolume:
    """Map per-bin mean costs to a per-pixel distribution.

    "shift-linear" (default): p_k proportional to (max_j c_j - c_k + eps),
    the closest reading of scaling the negated error to sum to one.
    "softmax": p_k proportional to exp(-c_k / beta).

    Statistics run over observed bins only (sample_count > 0); bins without
    a single valid sample carry no evidence, so they get the mean observed
    weight: neutral under fusion, never favored for being unobservable.
    Pixels with no valid samples in any bin get the uniform distribution.
    """
    if mode not in ("shift-linear", "softmax"):
        raise ValueError(f"unknown conversion mode {mode!r}")
    observed = cost_vol.sample_count > 0
    mean_cost = cost_vol.cost / np.maximum(cost_vol.sample_count, 1)
    masked = np.ma.masked_array(mean_cost, mask=~observed)
    cmax = masked.max(axis=2, keepdims=True).filled(0.0)
    cmin = masked.min(axis=2, keepdims=True).filled(0.0)
    # Rays whose spread is at floating-point noise level (zero-parallax
    # geometry cancels depth algebraically but not bitwise) carry no depth
    # signal; flattening them stops the range-scaled epsilon from blowing
    # rounding noise up into confident structure.
    flat = (cmax - cmin) <= 1e-9 * np.maximum(cmax, 1e-30)
    if mode == "shift-linear":
        eps = SHIFT_LINEAR_EPS * (cmax - cmin + 1e-12)
        raw = cmax - mean_cost + eps
    else:
        raw = np.exp(-(mean_cost - cmin) / beta)
    raw = np.where(flat, 1.0, raw)
    n_obs = observed.sum(axis=2, keepdims=True)
    obs_sum = np.where(observed, raw, 0.0).sum(axis=2, keepdims=True)
    neutral = obs_sum / np.maximum(n_obs, 1)
    raw = np.where(observed, raw, neutral)
    sums = raw.sum(axis=2, keepdims=True)
    probs = np.divide(raw, sums, out=np.zeros_like(raw), where=sums > 0)
    unobserved_pixels = n_obs[..., 0] == 0
    if np.any(unobserved_pixels):
        probs[unobserved_pixels] = 1.0 / cost_vol.binning.k_count
    return ProbabilityVolume(cost_vol.binning, probs)
