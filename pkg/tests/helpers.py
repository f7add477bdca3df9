"""Shared synthetic scene for solver/pipeline/acceptance tests.

The scene is a slanted textured plane with a frontoparallel textured box
face floating in front of it. Every camera renders by exact per-pixel ray
casting against the two planes, so images from different poses are
multi-view consistent with zero resampling error, and ground-truth depth,
normals and occlusion boundaries are analytic.

World frame = camera 0's frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pvfusion.geometry import Intrinsics, Pose
from pvfusion.pipeline import Frame


@dataclass
class Scene:
    plane_normal: np.ndarray  # world frame, unit, facing camera 0
    plane_offset: float  # n . X = c
    box_z: float
    box_rect: tuple[float, float, float, float]  # x0, x1, y0, y1 in world


DEFAULT_SCENE = Scene(
    plane_normal=np.array([0.15, 0.1, -0.98387093]) / np.linalg.norm([0.15, 0.1, -0.98387093]),
    plane_offset=None,  # type: ignore[arg-type]  # filled in below
    box_z=1.6,
    box_rect=(-0.35, 0.15, -0.3, 0.1),
)
# Plane passes through (0, 0, 2.4) in front of camera 0.
DEFAULT_SCENE.plane_offset = float(DEFAULT_SCENE.plane_normal @ np.array([0.0, 0.0, 2.4]))


def _texture_plane(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return (
        128
        + 52 * np.sin(7.1 * x) * np.cos(5.3 * y)
        + 38 * np.sin(3.7 * x + 2.9 * y)
        + 18 * np.cos(11.3 * y + 1.7)
    )


def _texture_box(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return 120 + 60 * np.sin(17.0 * x + 3.0) * np.sin(13.0 * y + 1.0) + 25 * np.cos(9.0 * x)


def default_intrinsics(width: int = 256, height: int = 192) -> Intrinsics:
    f = 0.8 * width
    return Intrinsics(fx=f, fy=f, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
                      width=width, height=height)


def render_view(
    pose: Pose, intrinsics: Intrinsics, scene: Scene = DEFAULT_SCENE
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Render (rgb, gt_depth, gt_normals) for one camera.

    pose is camera-from-world. Normals come back in the camera frame,
    oriented toward the camera.
    """
    h, w = intrinsics.height, intrinsics.width
    rays = intrinsics.ray_grid()  # camera frame, (H, W, 3)
    r_wc = pose.rotation.T
    origin = -r_wc @ pose.translation
    dirs = rays @ pose.rotation  # R^T applied to each ray

    n = scene.plane_normal
    denom = dirs @ n
    # Plane behind or parallel rays would give non-positive depth; the scene
    # geometry keeps all rays hitting the front face.
    lam_plane = (scene.plane_offset - origin @ n) / denom

    dz = dirs[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        lam_box = (scene.box_z - origin[2]) / dz
    hit_x = origin[0] + lam_box * dirs[..., 0]
    hit_y = origin[1] + lam_box * dirs[..., 1]
    x0, x1, y0, y1 = scene.box_rect
    box_hit = (
        (lam_box > 0)
        & (lam_box < lam_plane)
        & (hit_x >= x0)
        & (hit_x <= x1)
        & (hit_y >= y0)
        & (hit_y <= y1)
    )

    depth = np.where(box_hit, lam_box, lam_plane)
    points_w = origin + depth[..., None] * dirs

    lum = np.where(
        box_hit,
        _texture_box(points_w[..., 0], points_w[..., 1]),
        _texture_plane(points_w[..., 0], points_w[..., 1]),
    )
    rgb = np.repeat(lum[..., None], 3, axis=2)

    n_box = np.array([0.0, 0.0, -1.0])
    n_plane_c = pose.rotation @ n
    n_box_c = pose.rotation @ n_box
    normals = np.where(box_hit[..., None], n_box_c, n_plane_c)
    # Orient toward the camera.
    points_c = rays * depth[..., None]
    flip = np.einsum("hwc,hwc->hw", normals, points_c) > 0
    normals = np.where(flip[..., None], -normals, normals)
    return rgb, depth, normals


def boundary_prob_from_depth(depth: np.ndarray, rel_jump: float = 0.05) -> np.ndarray:
    """1.0 on pixels adjacent to a relative depth jump, else 0."""
    h, w = depth.shape
    prob = np.zeros((h, w))
    dx = np.abs(np.diff(depth, axis=1)) / np.minimum(depth[:, 1:], depth[:, :-1])
    dy = np.abs(np.diff(depth, axis=0)) / np.minimum(depth[1:, :], depth[:-1, :])
    jx = dx > rel_jump
    jy = dy > rel_jump
    prob[:, :-1] = np.maximum(prob[:, :-1], jx)
    prob[:, 1:] = np.maximum(prob[:, 1:], jx)
    prob[:-1, :] = np.maximum(prob[:-1, :], jy)
    prob[1:, :] = np.maximum(prob[1:, :], jy)
    return prob


def _yaw_pose(angle_rad: float, translation: np.ndarray) -> Pose:
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    rot = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    return Pose(rot, np.asarray(translation, dtype=np.float64))


def make_frames(
    poses: list[Pose], intrinsics: Intrinsics, scene: Scene = DEFAULT_SCENE
) -> list[Frame]:
    frames = []
    for i, pose in enumerate(poses):
        rgb, depth, _ = render_view(pose, intrinsics, scene)
        frames.append(Frame(timestamp=float(i), rgb=rgb, pose=pose, gt_depth=depth, index=i))
    return frames


def single_keyframe_poses(n_frames: int = 10) -> list[Pose]:
    """Camera 0 plus small lateral/vertical baselines: one keyframe's worth."""
    poses = [Pose.identity()]
    rng = np.random.default_rng(7)
    for i in range(1, n_frames):
        t = np.array(
            [
                0.12 * np.sin(1.0 + 2.1 * i) + 0.02 * rng.standard_normal(),
                0.08 * np.cos(0.5 + 1.7 * i) + 0.02 * rng.standard_normal(),
                0.03 * np.sin(0.9 * i),
            ]
        )
        # camera-from-world with camera center at -R^T t = -t for identity R
        poses.append(_yaw_pose(np.deg2rad(0.4 * np.sin(i)), -t))
    return poses


def two_keyframe_poses() -> list[Pose]:
    """Frames 0-4 translate near the origin; frame 5 yaws away hard enough to
    trigger a new keyframe; frames 6-9 only rotate (no parallax)."""
    poses = []
    for i in range(5):
        t = np.array([0.1 * np.sin(2.0 * i), 0.06 * np.cos(1.3 * i), 0.0])
        poses.append(_yaw_pose(0.0, -t))
    pivot = np.deg2rad(16.0)
    for i in range(5):
        jitter = np.deg2rad(1.2) * np.sin(1.0 + i)
        poses.append(_yaw_pose(pivot + jitter, np.array([0.0, 0.0, 0.0])))
    return poses
