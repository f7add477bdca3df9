"""Model wrappers behind a two-function interface: load(model_id) -> model,
model.infer(rgb, gt_depth) -> outputs.

Built-ins:
  uniform      flat distribution everywhere (smoke-test dummy)
  onehot-gt    one-hot at the bin containing the ground-truth depth, plus
               normals/boundaries derived from the same depth map
  torchscript:<path>
               any TorchScript module mapping a 1x3xHxW float image in
               [0, 1] to KxHxW logits (softmax applied here); a module
               returning a dict may add "normals" (3xHxW) and
               "boundary" (HxW)

Inference output is a dict with "probs" (H, W, K) and optional "normals"
(H, W, 3) and "boundary" (H, W).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ModelLoadError(RuntimeError):
    pass


@dataclass(frozen=True)
class Binning:
    k_count: int
    d_min: float
    d_max: float

    def bin_of(self, depth: np.ndarray) -> np.ndarray:
        safe = np.where(depth > 0, depth, self.d_min)
        frac = (np.log(safe) - math.log(self.d_min)) / (
            math.log(self.d_max) - math.log(self.d_min)
        )
        return np.clip(np.floor(self.k_count * frac).astype(np.int64), 0, self.k_count - 1)


def _normals_from_depth(depth: np.ndarray, fx: float, fy: float, cx: float, cy: float):
    h, w = depth.shape
    u = np.arange(w, dtype=np.float64)
    v = np.arange(h, dtype=np.float64)
    uu, vv = np.meshgrid(u, v)
    pts = np.stack([(uu - cx) / fx * depth, (vv - cy) / fy * depth, depth], axis=2)
    right = pts[:, 1:, :] - pts[:, :-1, :]
    down = pts[1:, :, :] - pts[:-1, :, :]
    n = np.cross(right[:-1], down[:, :-1])
    norm = np.linalg.norm(n, axis=2, keepdims=True)
    valid = (
        (depth[:-1, :-1] > 0) & (depth[:-1, 1:] > 0) & (depth[1:, :-1] > 0)
        & (norm[..., 0] > 1e-12)
    )
    n = np.where(valid[..., None], n / np.maximum(norm, 1e-30), 0.0)
    facing = np.einsum("hwc,hwc->hw", n, pts[:-1, :-1])
    n = np.where((facing > 0)[..., None], -n, n)
    out = np.zeros((h, w, 3))
    out[:-1, :-1] = n
    out[-1, :-1] = n[-1]
    out[:-1, -1] = n[:, -1]
    out[-1, -1] = n[-1, -1]
    return out


def _boundary_from_depth(depth: np.ndarray) -> np.ndarray:
    h, w = depth.shape
    prob = np.zeros((h, w))
    safe = np.where(depth > 0, depth, np.inf)
    dx = np.abs(np.diff(safe, axis=1)) / np.minimum(safe[:, 1:], safe[:, :-1])
    dy = np.abs(np.diff(safe, axis=0)) / np.minimum(safe[1:, :], safe[:-1, :])
    dx = np.nan_to_num(dx, posinf=0.0)
    dy = np.nan_to_num(dy, posinf=0.0)
    prob[:, :-1] = np.maximum(prob[:, :-1], dx)
    prob[:, 1:] = np.maximum(prob[:, 1:], dx)
    prob[:-1, :] = np.maximum(prob[:-1, :], dy)
    prob[1:, :] = np.maximum(prob[1:, :], dy)
    return np.clip(prob / 0.2, 0.0, 1.0)


class UniformModel:
    def __init__(self, binning: Binning):
        self.binning = binning

    def infer(self, rgb: np.ndarray, gt_depth: np.ndarray | None = None) -> dict:
        h, w = rgb.shape[:2]
        k = self.binning.k_count
        return {
            "probs": np.full((h, w, k), 1.0 / k),
            "normals": np.broadcast_to([0.0, 0.0, -1.0], (h, w, 3)).copy(),
            "boundary": np.zeros((h, w)),
        }


class OneHotGtModel:
    """Oracle stand-in: concentrates all mass in the true depth bin."""

    def __init__(self, binning: Binning):
        self.binning = binning

    def infer(self, rgb: np.ndarray, gt_depth: np.ndarray | None = None) -> dict:
        if gt_depth is None:
            raise ModelLoadError("onehot-gt needs ground-truth depth (--depths)")
        h, w = gt_depth.shape
        k = self.binning.k_count
        probs = np.full((h, w, k), 0.0)
        idx = self.binning.bin_of(gt_depth)
        valid = gt_depth > 0
        rows, cols = np.nonzero(valid)
        probs[rows, cols, idx[valid]] = 1.0
        probs[~valid] = 1.0 / k
        # Focal guess only shapes the synthetic normals; any plausible value
        # keeps them unit-length and camera-facing.
        f = 0.8 * w
        return {
            "probs": probs,
            "normals": _normals_from_depth(gt_depth, f, f, (w - 1) / 2, (h - 1) / 2),
            "boundary": _boundary_from_depth(gt_depth),
        }


class TorchScriptModel:
    def __init__(self, path: str, binning: Binning):
        try:
            import torch
        except ImportError as exc:  # pragma: no cover
            raise ModelLoadError(f"torch unavailable: {exc}") from exc
        self.torch = torch
        self.binning = binning
        try:
            self.module = torch.jit.load(path, map_location="cpu")
        except Exception as exc:
            raise ModelLoadError(f"cannot load TorchScript module {path}: {exc}") from exc
        self.module.eval()

    def infer(self, rgb: np.ndarray, gt_depth: np.ndarray | None = None) -> dict:
        torch = self.torch
        h, w = rgb.shape[:2]
        x = torch.from_numpy(rgb.astype(np.float32) / 255.0).permute(2, 0, 1)[None]
        with torch.no_grad():
            out = self.module(x)
        extras = {}
        if isinstance(out, dict):
            extras = out
            out = out["logits"]
        logits = out.squeeze(0)
        if logits.shape != (self.binning.k_count, h, w):
            raise ModelLoadError(
                f"model emitted {tuple(logits.shape)}, expected "
                f"({self.binning.k_count}, {h}, {w})"
            )
        probs = torch.softmax(logits, dim=0).permute(1, 2, 0).numpy().astype(np.float64)
        result = {"probs": probs}
        if "normals" in extras:
            result["normals"] = extras["normals"].squeeze(0).permute(1, 2, 0).numpy()
        if "boundary" in extras:
            result["boundary"] = extras["boundary"].squeeze(0).numpy()
        return result


def load_model(model_id: str, binning: Binning):
    if model_id == "uniform":
        return UniformModel(binning)
    if model_id == "onehot-gt":
        return OneHotGtModel(binning)
    if model_id.startswith("torchscript:"):
        return TorchScriptModel(model_id.split(":", 1)[1], binning)
    raise ModelLoadError(f"unknown model id: {model_id}")
