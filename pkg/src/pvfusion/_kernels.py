"""Selects the compiled extension core or the numpy fallback at import.

Set PVFUSION_FORCE_FALLBACK=1 to force the numpy path (used by the
benchmark and the kernel-equivalence tests).
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_np

_native = None
if not os.environ.get("PVFUSION_FORCE_FALLBACK"):
    try:
        from . import _native  # type: ignore[no-redef]
    except ImportError:
        _native = None

BACKEND = "native" if _native is not None else "numpy"


def kde_cost_grad(probs, midpoints, sigma, depth, want_grad=True):
    """Per-pixel -ln(max(f, floor)) and its depth gradient; see kde module."""
    if _native is not None:
        cost = np.empty(depth.shape)
        grad = np.empty(depth.shape) if want_grad else None
        _native.kde_cost_grad(
            np.ascontiguousarray(probs),
            np.ascontiguousarray(midpoints),
            float(sigma),
            np.ascontiguousarray(depth),
            cost,
            grad,
        )
        return cost, grad
    return _kernels_np.kde_cost_grad(probs, midpoints, sigma, depth, want_grad)


def accumulate_cost(
    cost, sample_count, keyframe, reference, rotation, translation, fx, fy, cx, cy, midpoints
):
    """Plane-sweep 3x3-patch SSD accumulation, in place."""
    args = (
        cost,
        sample_count,
        np.ascontiguousarray(keyframe),
        np.ascontiguousarray(reference),
        np.ascontiguousarray(rotation),
        np.ascontiguousarray(translation),
        float(fx),
        float(fy),
        float(cx),
        float(cy),
        np.ascontiguousarray(midpoints),
    )
    if _native is not None:
        _native.accumulate_cost(*args)
    else:
        _kernels_np.accumulate_cost(*args)


def warp_occupancy_sample(
    occ, rotation, translation, fx, fy, cx, cy, midpoints, log_d_min, log_d_max, default_occ
):
    """Resample an occupancy volume into a new camera; returns the new volume."""
    args = (
        np.ascontiguousarray(occ),
        np.ascontiguousarray(rotation),
        np.ascontiguousarray(translation),
        float(fx),
        float(fy),
        float(cx),
        float(cy),
        np.ascontiguousarray(midpoints),
        float(log_d_min),
        float(log_d_max),
        float(default_occ),
    )
    if _native is not None:
        out = np.empty_like(args[0])
        _native.warp_occupancy_sample(*args, out)
        return out
    return _kernels_np.warp_occupancy_sample(*args)
