"""Per-pixel discrete depth probability distributions and their algebra.

A probability volume stores, for every pixel of a keyframe, a distribution
over the shared log-depth bins. Fusion is the renormalized elementwise
product; this is the central state the whole system accumulates into.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, InvalidRangeError
from .geometry import DepthBinning

# Applied inside logarithms only; stored distributions are never floored.
LOG_FLOOR = 1e-12


@dataclass
class ProbabilityVolume:
    """H x W x K distribution over depth bins, normalized along the last axis."""

    binning: DepthBinning
    probs: np.ndarray  # (H, W, K) float64

    @property
    def height(self) -> int:
        return self.probs.shape[0]

    @property
    def width(self) -> int:
        return self.probs.shape[1]

    def validate(self, atol: float = 1e-9) -> None:
        if self.probs.ndim != 3 or self.probs.shape[2] != self.binning.k_count:
            raise DimensionMismatchError("probs must be (H, W, k_count)")
        if np.any(self.probs < 0):
            raise InvalidRangeError("negative probability")
        sums = self.probs.sum(axis=2)
        err = np.abs(sums - 1.0).max()
        if err > atol:
            raise InvalidRangeError(f"ray sums deviate from 1 by {err:.2e}")

    def copy(self) -> "ProbabilityVolume":
        return ProbabilityVolume(self.binning, self.probs.copy())


@dataclass(frozen=True)
class PriorModel:
    """Synthetic stand-in for a learned single-view depth distribution.

    Per pixel: a Gaussian bump (in bin index) centered on the true bin,
    mixed with a uniform floor. With probability `spurious_mode_prob` the
    pixel additionally receives a second bump offset by
    `spurious_offset_bins`; the spurious bump gets weight SPURIOUS_WEIGHT
    so that it dominates the argmax where injected.
    """

    sigma_bins: float = 2.0
    uniform_floor: float = 0.1
    spurious_mode_prob: float = 0.0
    spurious_offset_bins: int = 12
    seed: int = 0

    SPURIOUS_WEIGHT = 0.55

    def __post_init__(self):
        if self.sigma_bins <= 0:
            raise InvalidRangeError("sigma_bins must be positive")
        if not (0 <= self.uniform_floor < 1):
            raise InvalidRangeError("uniform_floor must be in [0, 1)")
        if not (0 <= self.spurious_mode_prob <= 1):
            raise InvalidRangeError("spurious_mode_prob must be in [0, 1]")


def uniform_volume(width: int, height: int, binning: DepthBinning) -> ProbabilityVolume:
    """Neutral element for fusion: every entry 1/k_count."""
    if width < 1 or height < 1:
        raise InvalidRangeError("width and height must be >= 1")
    probs = np.full((height, width, binning.k_count), 1.0 / binning.k_count)
    return ProbabilityVolume(binning, probs)


def fuse(keyframe_vol: ProbabilityVolume, new_vol: ProbabilityVolume) -> ProbabilityVolume:
    """Renormalized elementwise product of two volumes.

    Pixels whose product is identically zero (contradictory evidence) fall
    back to the uniform distribution.
    """
    if keyframe_vol.probs.shape != new_vol.probs.shape or not keyframe_vol.binning.same_as(
        new_vol.binning
    ):
        raise DimensionMismatchError("volumes must share dimensions and binning")
    prod = keyframe_vol.probs * new_vol.probs
    sums = prod.sum(axis=2, keepdims=True)
    dead = sums[..., 0] == 0.0
    out = np.divide(prod, sums, out=np.zeros_like(prod), where=sums > 0)
    if np.any(dead):
        out[dead] = 1.0 / keyframe_vol.binning.k_count
    return ProbabilityVolume(keyframe_vol.binning, out)


def _bump(k_center: np.ndarray, k_count: int, sigma_bins: float) -> np.ndarray:
    """Discrete Gaussian bump over bin indices, one row per pixel; unnormalized."""
    k = np.arange(k_count, dtype=np.float64)
    d = k[None, :] - k_center[:, None].astype(np.float64)
    return np.exp(-0.5 * (d / sigma_bins) ** 2)


def synth_prior(
    gt_depth: np.ndarray, model: PriorModel, binning: DepthBinning
) -> ProbabilityVolume:
    """Synthesize a prior volume from ground-truth depth.

    Invalid pixels (depth <= 0 or non-finite) get the uniform distribution.
    """
    h, w = gt_depth.shape
    k_count = binning.k_count
    valid = np.isfinite(gt_depth) & (gt_depth > 0)
    flat_depth = gt_depth.reshape(-1)
    k_star = binning.bin_of(np.where(valid.reshape(-1), flat_depth, binning.d_min))

    bumps = _bump(k_star, k_count, model.sigma_bins)

    if model.spurious_mode_prob > 0:
        rng = np.random.default_rng(model.seed)
        hit = rng.random(h * w) < model.spurious_mode_prob
        if np.any(hit):
            k_spur = np.clip(k_star[hit] + model.spurious_offset_bins, 0, k_count - 1)
            spur = _bump(k_spur, k_count, model.sigma_bins)
            wsp = model.SPURIOUS_WEIGHT
            # Normalize each bump before mixing so the weights mean mass shares.
            main = bumps[hit] / bumps[hit].sum(axis=1, keepdims=True)
            spur /= spur.sum(axis=1, keepdims=True)
            bumps[hit] = (1.0 - wsp) * main + wsp * spur

    bumps /= bumps.sum(axis=1, keepdims=True)
    probs = (1.0 - model.uniform_floor) * bumps + model.uniform_floor / k_count
    probs /= probs.sum(axis=1, keepdims=True)
    probs[~valid.reshape(-1)] = 1.0 / k_count
    return ProbabilityVolume(binning, probs.reshape(h, w, k_count))


def ordinal_loss(
    vol: ProbabilityVolume, gt_depth: np.ndarray, binning: DepthBinning | None = None
) -> float:
    """Ordinal distribution-quality metric over valid ground-truth pixels.

    Sums, per pixel with true bin k*: -[sum_{k<=k*} ln P(bin >= k)
    + sum_{k>k*} ln(1 - P(bin >= k))], with P(bin >= k) the upper cumulative
    of the pixel's distribution. Log arguments are clamped at LOG_FLOOR.
    Zero iff every valid pixel is one-hot at its true bin.
    """
    binning = binning or vol.binning
    if gt_depth.shape != (vol.height, vol.width):
        raise DimensionMismatchError("depth map and volume dimensions differ")
    valid = np.isfinite(gt_depth) & (gt_depth > 0)
    if not np.any(valid):
        return 0.0
    probs = vol.probs[valid]  # (N, K)
    k_star = binning.bin_of(gt_depth[valid])  # (N,)
    k_count = binning.k_count

    # upper[k] = P(bin >= k)
    upper = np.cumsum(probs[:, ::-1], axis=1)[:, ::-1]
    ks = np.arange(k_count)[None, :]
    below = ks <= k_star[:, None]
    term_lo = np.log(np.maximum(upper, LOG_FLOOR))
    term_hi = np.log(np.maximum(1.0 - upper, LOG_FLOOR))
    loss = -(np.where(below, term_lo, term_hi)).sum()
    return float(loss) + 0.0  # normalize -0.0


def argmax_depth(vol: ProbabilityVolume) -> np.ndarray:
    """Midpoint of each pixel's max-probability bin; ties go to the nearer bin."""
    # np.argmax takes the first maximum, and bins are ordered near-to-far.
    idx = np.argmax(vol.probs, axis=2)
    return vol.binning.midpoints[idx]


def expected_depth(vol: ProbabilityVolume) -> np.ndarray:
    """Per-pixel expectation of depth under the discrete distribution."""
    return vol.probs @ vol.binning.midpoints
