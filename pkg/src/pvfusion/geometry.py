"""Pinhole camera model, rigid-body poses, and log-depth binning.

Coordinate conventions (fixed for the whole package):
  - Camera frame: right-handed, x right, y down, +z forward (into the scene).
  - Poses are camera-from-world: X_cam = R @ X_world + t.
  - Image frame: u right, v down, origin at the top-left pixel center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCameraError, InvalidRangeError


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidRangeError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidRangeError("principal point must lie inside the image")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def scaled(self, factor: float) -> "Intrinsics":
        """Intrinsics for an image resized by `factor` in both axes."""
        return Intrinsics(
            fx=self.fx * factor,
            fy=self.fy * factor,
            cx=self.cx * factor,
            cy=self.cy * factor,
            width=int(round(self.width * factor)),
            height=int(round(self.height * factor)),
        )

    def ray_grid(self) -> np.ndarray:
        """Unit-depth backprojection rays K^-1 @ (u, v, 1), shape (H, W, 3)."""
        u = np.arange(self.width, dtype=np.float64)
        v = np.arange(self.height, dtype=np.float64)
        uu, vv = np.meshgrid(u, v)
        rays = np.empty((self.height, self.width, 3))
        rays[..., 0] = (uu - self.cx) / self.fx
        rays[..., 1] = (vv - self.cy) / self.fy
        rays[..., 2] = 1.0
        return rays


@dataclass(frozen=True)
class Pose:
    """Rigid transform, camera-from-world unless documented otherwise."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _frozen(self.rotation))
        object.__setattr__(self, "translation", _frozen(self.translation))
        if self.rotation.shape != (3, 3) or self.translation.shape != (3,):
            raise InvalidRangeError("pose needs a 3x3 rotation and 3-vector translation")
        err = np.abs(self.rotation.T @ self.rotation - np.eye(3)).max()
        if err > 1e-9:
            raise InvalidRangeError(f"rotation not orthonormal (|R^T R - I| = {err:.2e})")
        if abs(np.linalg.det(self.rotation) - 1.0) > 1e-9:
            raise InvalidRangeError("rotation determinant must be +1")

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    def inverse(self) -> "Pose":
        r_inv = self.rotation.T
        return Pose(r_inv, -r_inv @ self.translation)

    def compose(self, other: "Pose") -> "Pose":
        """self o other: apply `other` first, then `self`."""
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Apply to points of shape (..., 3)."""
        return points @ self.rotation.T + self.translation


@dataclass(frozen=True)
class DepthBinning:
    """Uniform-in-log discretization of a depth range into k_count bins.

    Midpoints are geometric (log-space) bin centers:
    midpoints[k] = exp(ln d_min + (k + 0.5) * delta), delta = ln(d_max/d_min)/k_count.
    """

    k_count: int
    d_min: float
    d_max: float
    midpoints: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "midpoints", _frozen(self.midpoints))

    @property
    def log_width(self) -> float:
        """Bin width in log-depth."""
        return (math.log(self.d_max) - math.log(self.d_min)) / self.k_count

    def bin_of(self, depth) -> np.ndarray:
        """Index of the bin containing `depth`, clamped to [0, k_count - 1].

        Accepts scalars or arrays; invalid (non-positive) depths map to bin 0,
        so callers must mask them separately.
        """
        d = np.asarray(depth, dtype=np.float64)
        safe = np.where(d > 0, d, self.d_min)
        frac = (np.log(safe) - math.log(self.d_min)) / (
            math.log(self.d_max) - math.log(self.d_min)
        )
        k = np.floor(self.k_count * frac).astype(np.int64)
        return np.clip(k, 0, self.k_count - 1)

    def same_as(self, other: "DepthBinning") -> bool:
        return (
            self.k_count == other.k_count
            and self.d_min == other.d_min
            and self.d_max == other.d_max
        )


def make_binning(d_min: float, d_max: float, k_count: int) -> DepthBinning:
    """Build the shared log-depth binning.

    Raises:
        InvalidRangeError: unless 0 < d_min < d_max and k_count >= 2.
    """
    if not (0 < d_min < d_max):
        raise InvalidRangeError("need 0 < d_min < d_max")
    if k_count < 2:
        raise InvalidRangeError("need k_count >= 2")
    delta = (math.log(d_max) - math.log(d_min)) / k_count
    k = np.arange(k_count, dtype=np.float64)
    midpoints = np.exp(math.log(d_min) + (k + 0.5) * delta)
    return DepthBinning(k_count=k_count, d_min=d_min, d_max=d_max, midpoints=midpoints)


def project(intrinsics: Intrinsics, point: np.ndarray) -> tuple[float, float, float]:
    """Project a camera-frame point to (u, v, depth).

    Raises:
        BehindCameraError: if point.z <= 0.
    """
    x, y, z = float(point[0]), float(point[1]), float(point[2])
    if z <= 0:
        raise BehindCameraError(f"point has non-positive depth z={z}")
    return (
        intrinsics.fx * x / z + intrinsics.cx,
        intrinsics.fy * y / z + intrinsics.cy,
        z,
    )


def backproject(intrinsics: Intrinsics, u: float, v: float, depth: float) -> np.ndarray:
    """Camera-frame point depth * K^-1 @ (u, v, 1).

    Raises:
        InvalidRangeError: if depth <= 0.
    """
    if depth <= 0:
        raise InvalidRangeError(f"depth must be positive, got {depth}")
    return depth * np.array(
        [(u - intrinsics.cx) / intrinsics.fx, (v - intrinsics.cy) / intrinsics.fy, 1.0]
    )


def relative_pose(pose_a: Pose, pose_b: Pose) -> Pose:
    """T_b o T_a^-1: maps points in frame a's camera coordinates to frame b's."""
    return pose_b.compose(pose_a.inverse())
