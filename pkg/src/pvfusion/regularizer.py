"""Pairwise regularization energies with analytic gradients.

Depth maps, normal maps and masks are plain arrays:
  - depth: (H, W) float64, metres; 0 or non-finite marks invalid pixels.
  - normals: (H, W, 3) float64 camera-frame unit vectors; the zero vector
    marks an invalid normal (its terms drop out of the energy).
  - occlusion mask: (H, W) values in {0, 1}; 0 disables a pixel's terms.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatchError, InvalidRangeError
from .geometry import Intrinsics

TV_EPSILON = 1e-6
DEFAULT_BOUNDARY_THRESHOLD = 0.4


def mask_from_boundary_prob(
    prob_map: np.ndarray, threshold: float = DEFAULT_BOUNDARY_THRESHOLD
) -> np.ndarray:
    """Binary mask disabling regularization at likely occlusion boundaries.

    Pixels with boundary probability strictly greater than the threshold get
    0 (regularizer off); everything else gets 1.
    """
    p = np.asarray(prob_map, dtype=np.float64)
    if np.any(p < 0) or np.any(p > 1) or not np.all(np.isfinite(p)):
        raise InvalidRangeError("boundary probabilities must lie in [0, 1]")
    return np.where(p > threshold, 0.0, 1.0)


class NormalRegularizer:
    """Pairwise normal-consistency energy with precomputed coefficients.

    energy = sum_i b_i * [<n_i, P_i - P_right>^2 + <n_i, P_i - P_down>^2]
    with P_j = d_j * K^-1 (u_j, v_j, 1). Terms whose neighbor leaves the
    image are omitted. Every coefficient is depth-independent, so a solver
    calling this hundreds of times per extraction pays only a few array
    multiplies per call.
    """

    def __init__(self, normals: np.ndarray, mask: np.ndarray, intrinsics: Intrinsics):
        h, w, _ = normals.shape
        if mask.shape != (h, w):
            raise DimensionMismatchError("normals and mask dimensions differ")
        rays = intrinsics.ray_grid()
        a = np.einsum("hwc,hwc->hw", normals, rays)
        self.a_r = a[:, :-1]
        self.a_d = a[:-1, :]
        self.nb_r = np.einsum("hwc,hwc->hw", normals[:, :-1], rays[:, 1:])
        self.nb_d = np.einsum("hwc,hwc->hw", normals[:-1, :], rays[1:, :])
        self.m_r = mask[:, :-1]
        self.m_d = mask[:-1, :]

    def energy(self, depth: np.ndarray) -> float:
        res_r = self.m_r * (self.a_r * depth[:, :-1] - self.nb_r * depth[:, 1:])
        res_d = self.m_d * (self.a_d * depth[:-1, :] - self.nb_d * depth[1:, :])
        return float((res_r * res_r).sum() + (res_d * res_d).sum())

    def energy_and_grad(self, depth: np.ndarray) -> tuple[float, np.ndarray]:
        grad = np.zeros_like(depth)
        res = self.m_r * (self.a_r * depth[:, :-1] - self.nb_r * depth[:, 1:])
        energy = float((res * res).sum())
        grad[:, :-1] += 2.0 * res * self.a_r * self.m_r
        grad[:, 1:] -= 2.0 * res * self.nb_r * self.m_r

        res = self.m_d * (self.a_d * depth[:-1, :] - self.nb_d * depth[1:, :])
        energy += float((res * res).sum())
        grad[:-1, :] += 2.0 * res * self.a_d * self.m_d
        grad[1:, :] -= 2.0 * res * self.nb_d * self.m_d
        return energy, grad


def normal_energy_and_grad(
    depth: np.ndarray,
    normals: np.ndarray,
    mask: np.ndarray,
    intrinsics: Intrinsics,
) -> tuple[float, np.ndarray]:
    """One-shot form of NormalRegularizer.energy_and_grad."""
    h, w = depth.shape
    if normals.shape != (h, w, 3) or mask.shape != (h, w):
        raise DimensionMismatchError("depth, normals and mask dimensions differ")
    return NormalRegularizer(normals, mask, intrinsics).energy_and_grad(depth)


def tv_energy_and_grad(depth: np.ndarray) -> tuple[float, np.ndarray]:
    """Charbonnier-smoothed total variation with analytic gradient.

    energy = sum_i sqrt(dx_i^2 + dy_i^2 + eps^2); forward differences,
    zero beyond the last row/column, so every pixel contributes a term.
    """
    h, w = depth.shape
    dx = np.zeros((h, w))
    dy = np.zeros((h, w))
    dx[:, : w - 1] = depth[:, 1:] - depth[:, : w - 1]
    dy[: h - 1, :] = depth[1:, :] - depth[: h - 1, :]
    root = np.sqrt(dx * dx + dy * dy + TV_EPSILON**2)
    energy = float(root.sum())

    gx = dx / root
    gy = dy / root
    grad = -(gx + gy)
    grad[:, 1:] += gx[:, : w - 1]
    grad[1:, :] += gy[: h - 1, :]
    return energy, grad


def normals_from_depth(depth: np.ndarray, intrinsics: Intrinsics) -> np.ndarray:
    """Synthetic per-pixel normals from a depth map.

    Normalized cross product of the backprojected right- and down-neighbor
    difference vectors, oriented toward the camera (n . P < 0). Border
    pixels reuse the nearest interior estimate; pixels with any invalid
    depth in the stencil get the zero (invalid) normal.
    """
    h, w = depth.shape
    rays = intrinsics.ray_grid()
    points = rays * depth[..., None]

    right = points[:, 1:, :] - points[:, :-1, :]  # (H, W-1, 3)
    down = points[1:, :, :] - points[:-1, :, :]  # (H-1, W, 3)
    n = np.cross(right[:-1, :, :], down[:, :-1, :])  # (H-1, W-1, 3)

    norm = np.linalg.norm(n, axis=2, keepdims=True)
    valid = (
        (depth[:-1, :-1] > 0)
        & (depth[:-1, 1:] > 0)
        & (depth[1:, :-1] > 0)
        & np.isfinite(depth[:-1, :-1])
        & (norm[..., 0] > 1e-12)
    )
    with np.errstate(invalid="ignore", divide="ignore"):
        n = np.where(valid[..., None], n / norm, 0.0)

    # Flip any normal facing away from the camera.
    facing = np.einsum("hwc,hwc->hw", n, points[:-1, :-1, :])
    n = np.where((facing > 0)[..., None], -n, n)

    out = np.zeros((h, w, 3))
    out[: h - 1, : w - 1] = n
    out[h - 1, : w - 1] = n[h - 2, :]
    out[: h - 1, w - 1] = n[:, w - 2]
    out[h - 1, w - 1] = n[h - 2, w - 2]
    return out
