"""Keyframe lifecycle: evidence accumulation, extraction, propagation.

A keyframe owns a probability volume seeded from its prior channel (and,
when warping is on, the previous keyframe's propagated volume). Each
subsequent frame adds plane-sweep photometric evidence; once the in-frustum
overlap of the keyframe's argmax depths drops below a threshold (or a hard
reference-frame cap is hit), the keyframe is finalized: depth extracted,
evaluated against ground truth where present, and propagated forward.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .dataset_io import (
    PIPELINE_HEIGHT,
    PIPELINE_WIDTH,
    SequenceIndex,
    load_boundary,
    load_frame_images,
    load_normals,
    load_prior,
)
from .errors import DimensionMismatchError, InvalidRangeError
from .geometry import Intrinsics, Pose, make_binning, relative_pose
from .metrics import EvalReport, evaluate
from .photometric import (
    PhotoCostVolume,
    accumulate_cost,
    cost_to_probability,
    empty_cost_volume,
    normalize_image,
)
from .regularizer import mask_from_boundary_prob, normals_from_depth
from .solver import SolverConfig, SolverDiagnostics, extract_depth
from .volume import (
    PriorModel,
    ProbabilityVolume,
    argmax_depth,
    fuse,
    synth_prior,
    uniform_volume,
)
from .warp import propagate_keyframe

logger = logging.getLogger(__name__)

FUSION_MODES = ("fused", "network-only", "photometric-only")


@dataclass
class Frame:
    """One input frame with its oracle pose (camera-from-world)."""

    timestamp: float
    rgb: np.ndarray
    pose: Pose
    gt_depth: np.ndarray | None = None
    index: int = 0


@dataclass
class PipelineConfig:
    d_min: float = 0.1
    d_max: float = 12.0
    k_count: int = 64
    fusion_mode: str = "fused"
    prior_source: str = "synthetic"  # file | synthetic | uniform
    normals_source: str = "from-gt-depth"  # file | from-gt-depth
    boundary_source: str = "none"  # file | none
    prior_template: str | None = None  # .format(index=..., timestamp=...)
    normals_template: str | None = None
    boundary_template: str | None = None
    prior_model: PriorModel = field(default_factory=PriorModel)
    overlap_tau: float = 0.8
    max_ref_frames: int | None = None
    warp_enabled: bool = True
    conversion_mode: str = "shift-linear"
    softmax_beta: float = 1.0
    solver: SolverConfig = field(default_factory=SolverConfig)
    solver_init: str | None = None  # None -> argmax, expected for photometric-only

    def __post_init__(self):
        if self.fusion_mode not in FUSION_MODES:
            raise InvalidRangeError(f"unknown fusion mode {self.fusion_mode!r}")
        if not (0 < self.overlap_tau <= 1):
            raise InvalidRangeError("overlap_tau must be in (0, 1]")
        if self.prior_source == "file" and not self.prior_template:
            raise InvalidRangeError("prior_source=file needs prior_template")

    def binning(self):
        return make_binning(self.d_min, self.d_max, self.k_count)

    def solver_for_mode(self) -> SolverConfig:
        init = self.solver_init
        if init is None:
            init = "expected" if self.fusion_mode == "photometric-only" else "argmax"
        return dataclasses.replace(self.solver, init=init)


@dataclass
class KeyframeState:
    frame: Frame
    gray: np.ndarray
    base_volume: ProbabilityVolume  # prior channel (+ warped predecessor)
    fused_volume: ProbabilityVolume
    cost_volume: PhotoCostVolume
    normals: np.ndarray
    mask: np.ndarray
    ref_frame_count: int = 0

    def __post_init__(self):
        h, w = self.gray.shape
        for vol in (self.base_volume, self.fused_volume):
            if vol.probs.shape[:2] != (h, w):
                raise DimensionMismatchError("keyframe component dimensions differ")
        if self.normals.shape != (h, w, 3) or self.mask.shape != (h, w):
            raise DimensionMismatchError("keyframe component dimensions differ")


@dataclass
class KeyframeResult:
    index: int
    timestamp: float
    depth: np.ndarray
    report: EvalReport | None
    diagnostics: SolverDiagnostics
    ref_frame_count: int


def _resolve_template(template: str, frame: Frame) -> str:
    return template.format(index=frame.index, timestamp=frame.timestamp)


def _prior_for(frame: Frame, config: PipelineConfig, binning) -> ProbabilityVolume:
    h, w = frame.rgb.shape[:2]
    if config.prior_source == "uniform":
        return uniform_volume(w, h, binning)
    if config.prior_source == "synthetic":
        if frame.gt_depth is None:
            raise InvalidRangeError("synthetic priors need ground-truth depth")
        return synth_prior(frame.gt_depth, config.prior_model, binning)
    vol = load_prior(_resolve_template(config.prior_template, frame))
    if (vol.height, vol.width) != (h, w) or not vol.binning.same_as(binning):
        raise DimensionMismatchError("prior file dimensions or binning differ")
    return vol


def _normals_for(frame: Frame, config: PipelineConfig, intrinsics: Intrinsics) -> np.ndarray:
    if config.normals_source == "file":
        if not config.normals_template:
            raise InvalidRangeError("normals_source=file needs normals_template")
        return load_normals(_resolve_template(config.normals_template, frame))
    if frame.gt_depth is None:
        raise InvalidRangeError("normals from depth need ground-truth depth")
    return normals_from_depth(frame.gt_depth, intrinsics)


def _mask_for(frame: Frame, config: PipelineConfig) -> np.ndarray:
    h, w = frame.rgb.shape[:2]
    if config.boundary_source == "file":
        if not config.boundary_template:
            raise InvalidRangeError("boundary_source=file needs boundary_template")
        return mask_from_boundary_prob(
            load_boundary(_resolve_template(config.boundary_template, frame))
        )
    return np.ones((h, w))


def new_keyframe(
    frame: Frame,
    config: PipelineConfig,
    intrinsics: Intrinsics,
    previous: KeyframeState | None = None,
) -> KeyframeState:
    """Open a keyframe on `frame`, propagating the previous volume if enabled."""
    binning = config.binning()
    h, w = frame.rgb.shape[:2]
    if config.fusion_mode == "photometric-only":
        base = uniform_volume(w, h, binning)
    else:
        base = _prior_for(frame, config, binning)
    if config.warp_enabled and previous is not None:
        new_from_old = relative_pose(previous.frame.pose, frame.pose)
        base = propagate_keyframe(previous.fused_volume, base, new_from_old, intrinsics)
    return KeyframeState(
        frame=frame,
        gray=normalize_image(frame.rgb),
        base_volume=base,
        fused_volume=base.copy(),
        cost_volume=empty_cost_volume(w, h, binning),
        normals=_normals_for(frame, config, intrinsics),
        mask=_mask_for(frame, config),
    )


def _overlap_fraction(state: KeyframeState, frame: Frame, intrinsics: Intrinsics) -> float:
    """Share of keyframe pixels whose argmax-depth points project into `frame`."""
    depth = argmax_depth(state.fused_volume)
    rays = intrinsics.ray_grid()
    points = rays * depth[..., None]
    t = relative_pose(state.frame.pose, frame.pose)
    moved = points @ t.rotation.T + t.translation
    z = moved[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intrinsics.fx * moved[..., 0] / z + intrinsics.cx
        v = intrinsics.fy * moved[..., 1] / z + intrinsics.cy
    inside = (
        (z > 0)
        & (u >= 0)
        & (u <= intrinsics.width - 1)
        & (v >= 0)
        & (v <= intrinsics.height - 1)
    )
    return float(inside.mean())


def process_frame(
    state: KeyframeState,
    frame: Frame,
    config: PipelineConfig,
    intrinsics: Intrinsics,
) -> tuple[KeyframeState, bool]:
    """Fold one reference frame into the keyframe; returns (state, new_kf_signal).

    Each reference frame's cost volume converts to a probability volume on
    its own and multiplies into the keyframe volume, so photometric contrast
    compounds over frames; a single conversion of the summed costs would
    stay nearly flat no matter how many frames contribute. The keyframe's
    accumulator still pools the raw costs across frames.
    """
    if config.fusion_mode != "network-only":
        kf_from_ref = relative_pose(frame.pose, state.frame.pose)
        h, w = state.gray.shape
        frame_cost = empty_cost_volume(w, h, state.cost_volume.binning)
        accumulate_cost(
            frame_cost, state.gray, normalize_image(frame.rgb), kf_from_ref, intrinsics
        )
        photometric = cost_to_probability(
            frame_cost, mode=config.conversion_mode, beta=config.softmax_beta
        )
        # base differences (prior vs uniform) realize the ablation modes.
        state.fused_volume = fuse(state.fused_volume, photometric)
        state.cost_volume.cost += frame_cost.cost
        state.cost_volume.sample_count += frame_cost.sample_count
    state.ref_frame_count += 1

    overlap = _overlap_fraction(state, frame, intrinsics)
    signal = overlap < config.overlap_tau
    if config.max_ref_frames is not None and state.ref_frame_count >= config.max_ref_frames:
        signal = True
    return state, signal


def finalize_keyframe(
    state: KeyframeState, config: PipelineConfig, intrinsics: Intrinsics
) -> KeyframeResult:
    """Extract and evaluate the keyframe's depth map."""
    depth, diag = extract_depth(
        state.fused_volume, state.normals, state.mask, intrinsics, config.solver_for_mode()
    )
    report = None
    if state.frame.gt_depth is not None:
        report = evaluate(depth, state.frame.gt_depth)
    return KeyframeResult(
        index=state.frame.index,
        timestamp=state.frame.timestamp,
        depth=depth,
        report=report,
        diagnostics=diag,
        ref_frame_count=state.ref_frame_count,
    )


def iter_sequence_frames(
    sequence: SequenceIndex,
    max_frames: int | None = None,
    target_width: int = PIPELINE_WIDTH,
    target_height: int = PIPELINE_HEIGHT,
) -> Iterator[Frame]:
    """Yield downsampled Frames from a TUM sequence index."""
    for i, rec in enumerate(sequence.records):
        if max_frames is not None and i >= max_frames:
            break
        rgb, depth = load_frame_images(rec, target_width, target_height)
        yield Frame(timestamp=rec.timestamp, rgb=rgb, pose=rec.pose, gt_depth=depth, index=i)


def run_sequence(
    frames: Iterable[Frame],
    config: PipelineConfig,
    intrinsics: Intrinsics,
) -> list[KeyframeResult]:
    """Run the full pipeline over a frame stream; one result per keyframe."""
    results: list[KeyframeResult] = []
    state: KeyframeState | None = None
    for frame in frames:
        if state is None:
            state = new_keyframe(frame, config, intrinsics)
            continue
        state, signal = process_frame(state, frame, config, intrinsics)
        if signal:
            results.append(finalize_keyframe(state, config, intrinsics))
            logger.info(
                "keyframe %d finalized after %d reference frames",
                state.frame.index,
                state.ref_frame_count,
            )
            state = new_keyframe(frame, config, intrinsics, previous=state)
    if state is None:
        raise InvalidRangeError("empty sequence")
    results.append(finalize_keyframe(state, config, intrinsics))
    return results
