"""Probability-volume propagation between keyframes via occupancy grids.

A depth distribution converts to per-voxel occupancy along each ray,
the occupancy field warps rigidly into the new camera (it describes points
in 3-D space, so plain resampling is sound), and converts back to a depth
distribution. Delta distributions survive the round trip exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DimensionMismatchError, InvalidRangeError
from .geometry import DepthBinning, Intrinsics, Pose
from .volume import ProbabilityVolume, fuse

DEFAULT_OCCUPANCY = 0.01


@dataclass
class OccupancyVolume:
    """Per-voxel occupancy probabilities along each pixel ray."""

    binning: DepthBinning
    occ: np.ndarray  # (H, W, K) in [0, 1]

    @property
    def height(self) -> int:
        return self.occ.shape[0]

    @property
    def width(self) -> int:
        return self.occ.shape[1]


def depth_to_occupancy(vol: ProbabilityVolume) -> OccupancyVolume:
    """occ_k = p_k + 0.5 * P(bin < k).

    Marginalizes the conditional occupancy model: a voxel in front of the
    surface is free (0), at the surface occupied (1), behind it unknown (1/2).
    """
    p = vol.probs
    cdf_before = np.cumsum(p, axis=2) - p  # exclusive prefix sums
    occ = p + 0.5 * cdf_before
    return OccupancyVolume(vol.binning, occ)


def occupancy_to_depth(occ_vol: OccupancyVolume) -> ProbabilityVolume:
    """p_k proportional to prod_{j<k}(1 - occ_j) * occ_k, renormalized.

    Rays with zero mass everywhere fall back to uniform.
    """
    occ = occ_vol.occ
    free = 1.0 - occ
    # Exclusive cumulative product of "free" probabilities before each bin.
    shifted = np.ones_like(free)
    shifted[..., 1:] = np.cumprod(free[..., :-1], axis=2)
    raw = shifted * occ
    sums = raw.sum(axis=2, keepdims=True)
    dead = sums[..., 0] == 0.0
    probs = np.divide(raw, sums, out=np.zeros_like(raw), where=sums > 0)
    if np.any(dead):
        probs[dead] = 1.0 / occ_vol.binning.k_count
    return ProbabilityVolume(occ_vol.binning, probs)


def warp_occupancy(
    occ_vol: OccupancyVolume,
    new_from_old_pose: Pose,
    intrinsics: Intrinsics,
    default_occ: float = DEFAULT_OCCUPANCY,
) -> OccupancyVolume:
    """Rigidly resample the occupancy field into a new camera.

    Each new-frame voxel backprojects at its bin midpoint and samples the old
    volume (bilinear across pixels, nearest log-depth bin); voxels leaving
    the old frustum or depth range get default_occ.
    """
    if not (0.0 <= default_occ <= 1.0):
        raise InvalidRangeError("default_occ must lie in [0, 1]")
    binning = occ_vol.binning
    old_from_new = new_from_old_pose.inverse()
    out = _kernels.warp_occupancy_sample(
        occ_vol.occ,
        old_from_new.rotation,
        old_from_new.translation,
        intrinsics.fx,
        intrinsics.fy,
        intrinsics.cx,
        intrinsics.cy,
        binning.midpoints,
        math.log(binning.d_min),
        math.log(binning.d_max),
        default_occ,
    )
    return OccupancyVolume(binning, out)


def propagate_keyframe(
    old_kf_vol: ProbabilityVolume,
    network_prior: ProbabilityVolume,
    new_from_old_pose: Pose,
    intrinsics: Intrinsics,
    default_occ: float = DEFAULT_OCCUPANCY,
) -> ProbabilityVolume:
    """Initialize a new keyframe: warp the old volume and fuse with the prior."""
    if old_kf_vol.probs.shape != network_prior.probs.shape:
        raise DimensionMismatchError("old volume and prior dimensions differ")
    occ = depth_to_occupancy(old_kf_vol)
    warped = warp_occupancy(occ, new_from_old_pose, intrinsics, default_occ)
    return fuse(network_prior, occupancy_to_depth(warped))
