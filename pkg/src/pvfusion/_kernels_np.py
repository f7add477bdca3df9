"""Pure-numpy implementations of the hot kernels.

Reference semantics for the compiled extension in `_native.pyx`; also the
fallback used when the extension is unavailable. Keep the two in lockstep:
tests assert elementwise agreement.
"""

from __future__ import annotations

import math

import numpy as np

from .kde import DENSITY_FLOOR


def kde_cost_grad(
    probs: np.ndarray,
    midpoints: np.ndarray,
    sigma: float,
    depth: np.ndarray,
    want_grad: bool = True,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Per-pixel negative-log smoothed density and its depth gradient.

    probs: (H, W, K); depth: (H, W). Returns (cost (H, W), grad (H, W) | None).
    """
    z = (depth[..., None] - midpoints[None, None, :]) / sigma
    g = np.exp(-0.5 * z * z) / (sigma * math.sqrt(2.0 * math.pi))
    f = np.einsum("hwk,hwk->hw", probs, g)
    denom = np.maximum(f, DENSITY_FLOOR)
    cost = -np.log(denom)
    if not want_grad:
        return cost, None
    fp = np.einsum("hwk,hwk->hw", probs, g * (midpoints[None, None, :] - depth[..., None]))
    fp /= sigma * sigma
    return cost, -fp / denom


def _bilinear(img: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Bilinear samples of img at float coords; coords clamped to the image."""
    h, w = img.shape
    u = np.clip(u, 0.0, w - 1.0)
    v = np.clip(v, 0.0, h - 1.0)
    u0 = np.floor(u).astype(np.int64)
    v0 = np.floor(v).astype(np.int64)
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    fu = u - u0
    fv = v - v0
    top = img[v0, u0] * (1.0 - fu) + img[v0, u1] * fu
    bot = img[v1, u0] * (1.0 - fu) + img[v1, u1] * fu
    return top * (1.0 - fv) + bot * fv


def accumulate_cost(
    cost: np.ndarray,
    sample_count: np.ndarray,
    keyframe: np.ndarray,
    reference: np.ndarray,
    rotation: np.ndarray,
    translation: np.ndarray,
    fx: float,
    fy: float,
    cx: float,
    cy: float,
    midpoints: np.ndarray,
) -> None:
    """Plane-sweep SSD accumulation, in place.

    For every keyframe pixel and bin midpoint: backproject, move into the
    reference frame with (rotation, translation) = ref-from-keyframe, project,
    and add the 3x3-patch SSD between the keyframe patch and the bilinearly
    sampled reference patch. A sample is valid only if both full patches are
    in bounds; valid samples also increment sample_count.
    """
    h, w = keyframe.shape
    k_count = midpoints.shape[0]
    uu, vv = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    ray_x = (uu - cx) / fx
    ray_y = (vv - cy) / fy

    # Keyframe pixels need their own full 3x3 patch in bounds.
    kf_interior = np.zeros((h, w), dtype=bool)
    kf_interior[1 : h - 1, 1 : w - 1] = True

    offsets = [(dv, du) for dv in (-1, 0, 1) for du in (-1, 0, 1)]
    kf_patches = np.empty((9, h, w))
    for n, (dv, du) in enumerate(offsets):
        kf_patches[n] = np.roll(np.roll(keyframe, -dv, axis=0), -du, axis=1)

    for k in range(k_count):
        d = midpoints[k]
        px = ray_x * d
        py = ray_y * d
        pz = d
        qx = rotation[0, 0] * px + rotation[0, 1] * py + rotation[0, 2] * pz + translation[0]
        qy = rotation[1, 0] * px + rotation[1, 1] * py + rotation[1, 2] * pz + translation[1]
        qz = rotation[2, 0] * px + rotation[2, 1] * py + rotation[2, 2] * pz + translation[2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = fx * qx / qz + cx
            v = fy * qy / qz + cy
        # Whole warped 3x3 patch must fall inside the reference image; the
        # tolerance absorbs projection round-off at exact edges.
        valid = (
            kf_interior
            & (qz > 0)
            & (u >= 1.0 - 1e-9)
            & (u <= w - 2.0 + 1e-9)
            & (v >= 1.0 - 1e-9)
            & (v <= h - 2.0 + 1e-9)
        )
        if not np.any(valid):
            continue
        ssd = np.zeros((h, w))
        for n, (dv, du) in enumerate(offsets):
            warped = _bilinear(reference, np.where(valid, u, 1.0) + du, np.where(valid, v, 1.0) + dv)
            diff = kf_patches[n] - warped
            ssd += diff * diff
        cost[..., k] += np.where(valid, ssd, 0.0)
        sample_count[..., k] += valid


def warp_occupancy_sample(
    occ: np.ndarray,
    rotation: np.ndarray,
    translation: np.ndarray,
    fx: float,
    fy: float,
    cx: float,
    cy: float,
    midpoints: np.ndarray,
    log_d_min: float,
    log_d_max: float,
    default_occ: float,
) -> np.ndarray:
    """Resample an occupancy volume into a new camera.

    (rotation, translation) = old-from-new. Each new-frame voxel backprojects
    at its bin midpoint, lands in the old frame, and bilinearly samples the
    old occupancy at the bin containing its old-frame depth; out-of-frustum
    voxels get default_occ.
    """
    h, w, k_count = occ.shape
    out = np.full((h, w, k_count), default_occ)
    uu, vv = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    ray_x = (uu - cx) / fx
    ray_y = (vv - cy) / fy
    d_min = math.exp(log_d_min)
    d_max = math.exp(log_d_max)
    # Tolerance for exactly-on-edge projections (identity-pose round trips).
    edge = 1e-6

    for k in range(k_count):
        d = midpoints[k]
        px = ray_x * d
        py = ray_y * d
        pz = d
        qx = rotation[0, 0] * px + rotation[0, 1] * py + rotation[0, 2] * pz + translation[0]
        qy = rotation[1, 0] * px + rotation[1, 1] * py + rotation[1, 2] * pz + translation[1]
        qz = rotation[2, 0] * px + rotation[2, 1] * py + rotation[2, 2] * pz + translation[2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = fx * qx / qz + cx
            v = fy * qy / qz + cy
        valid = (
            (qz >= d_min)
            & (qz <= d_max)
            & (u >= -edge)
            & (u <= w - 1 + edge)
            & (v >= -edge)
            & (v <= h - 1 + edge)
        )
        if not np.any(valid):
            continue
        qz_safe = np.where(valid, qz, d_min)
        frac = (np.log(qz_safe) - log_d_min) / (log_d_max - log_d_min)
        kk = np.clip(np.floor(k_count * frac).astype(np.int64), 0, k_count - 1)
        u_c = np.clip(u, 0.0, w - 1.0)
        v_c = np.clip(v, 0.0, h - 1.0)
        u0 = np.floor(u_c).astype(np.int64)
        v0 = np.floor(v_c).astype(np.int64)
        u1 = np.minimum(u0 + 1, w - 1)
        v1 = np.minimum(v0 + 1, h - 1)
        fu = u_c - u0
        fv = v_c - v0
        top = occ[v0, u0, kk] * (1.0 - fu) + occ[v0, u1, kk] * fu
        bot = occ[v1, u0, kk] * (1.0 - fu) + occ[v1, u1, kk] * fu
        sample = top * (1.0 - fv) + bot * fv
        out[..., k] = np.where(valid, sample, default_occ)
    return out
