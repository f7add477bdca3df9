import dataclasses

import numpy as np
import pytest

from helpers import (
    default_intrinsics,
    make_frames,
    single_keyframe_poses,
    two_keyframe_poses,
)
from pvfusion.errors import InvalidRangeError
from pvfusion.geometry import Pose
from pvfusion.photometric import cost_to_probability
from pvfusion.pipeline import (
    Frame,
    PipelineConfig,
    finalize_keyframe,
    new_keyframe,
    process_frame,
    run_sequence,
)
from pvfusion.solver import SolverConfig
from pvfusion.volume import PriorModel, fuse


def quick_config(**overrides) -> PipelineConfig:
    base = dict(
        prior_model=PriorModel(sigma_bins=2.0, uniform_floor=0.2, seed=1),
        solver=SolverConfig(regularizer="none", max_iters=5),
    )
    base.update(overrides)
    return PipelineConfig(**base)


@pytest.fixture(scope="module")
def intr():
    return default_intrinsics(64, 48)


@pytest.fixture(scope="module")
def base_frames(intr):
    return make_frames(single_keyframe_poses(4), intr)


class TestProcessFrame:
    def test_identity_frame_full_overlap(self, intr, base_frames):
        config = quick_config()
        state = new_keyframe(base_frames[0], config, intr)
        same = dataclasses.replace(base_frames[0], index=1, timestamp=1.0)
        state, signal = process_frame(state, same, config, intr)
        assert not signal
        assert state.ref_frame_count == 1

    def test_opposite_view_signals_new_keyframe(self, intr, base_frames):
        config = quick_config()
        state = new_keyframe(base_frames[0], config, intr)
        flip = np.diag([-1.0, 1.0, -1.0])  # 180 degree yaw
        away = dataclasses.replace(base_frames[0], pose=Pose(flip, np.zeros(3)), index=1)
        _, signal = process_frame(state, away, config, intr)
        assert signal

    def test_fused_volume_matches_component_composition(self, intr, base_frames):
        # Per-frame semantics: each frame's converted cost volume multiplies
        # into the previous fused volume.
        config = quick_config(fusion_mode="fused")
        state = new_keyframe(base_frames[0], config, intr)
        base = state.base_volume.copy()
        state, _ = process_frame(state, base_frames[1], config, intr)
        first_cost = dataclasses.replace(
            state.cost_volume,
            cost=state.cost_volume.cost.copy(),
            sample_count=state.cost_volume.sample_count.copy(),
        )
        recomposed = fuse(base, cost_to_probability(first_cost))
        assert np.abs(state.fused_volume.probs - recomposed.probs).max() < 1e-12

        fused_after_one = state.fused_volume.copy()
        state, _ = process_frame(state, base_frames[2], config, intr)
        second_cost = dataclasses.replace(
            state.cost_volume,
            cost=state.cost_volume.cost - first_cost.cost,
            sample_count=state.cost_volume.sample_count - first_cost.sample_count,
        )
        recomposed2 = fuse(fused_after_one, cost_to_probability(second_cost))
        assert np.abs(state.fused_volume.probs - recomposed2.probs).max() < 1e-12

    def test_network_only_ignores_photometric(self, intr, base_frames):
        config = quick_config(fusion_mode="network-only")
        state = new_keyframe(base_frames[0], config, intr)
        before = state.fused_volume.probs.copy()
        state, _ = process_frame(state, base_frames[1], config, intr)
        assert np.array_equal(state.fused_volume.probs, before)
        assert np.all(state.cost_volume.sample_count == 0)

    def test_photometric_only_uses_uniform_base(self, intr, base_frames):
        config = quick_config(fusion_mode="photometric-only")
        state = new_keyframe(base_frames[0], config, intr)
        assert np.all(state.base_volume.probs == 1.0 / 64)
        state, _ = process_frame(state, base_frames[1], config, intr)
        # One frame in: the fused volume is that frame's conversion alone.
        expected = cost_to_probability(state.cost_volume)
        assert np.abs(state.fused_volume.probs - expected.probs).max() < 1e-12

    def test_max_ref_frames_cap(self, intr, base_frames):
        config = quick_config(max_ref_frames=1)
        state = new_keyframe(base_frames[0], config, intr)
        _, signal = process_frame(state, base_frames[1], config, intr)
        assert signal


class TestRunSequence:
    def test_single_frame_sequence(self, intr, base_frames):
        results = run_sequence(base_frames[:1], quick_config(), intr)
        assert len(results) == 1
        assert results[0].report is not None
        assert results[0].ref_frame_count == 0

    def test_empty_sequence_raises(self, intr):
        with pytest.raises(InvalidRangeError):
            run_sequence([], quick_config(), intr)

    def test_two_keyframes_created_on_view_change(self, intr):
        frames = make_frames(two_keyframe_poses(), intr)
        results = run_sequence(frames, quick_config(warp_enabled=False), intr)
        assert len(results) == 2
        assert results[0].index == 0

    def test_depth_always_within_binning_range(self, intr, base_frames):
        config = quick_config()
        results = run_sequence(base_frames, config, intr)
        for r in results:
            assert r.depth.min() >= config.d_min
            assert r.depth.max() <= config.d_max

    def test_photometric_only_defaults_to_expected_init(self):
        config = quick_config(fusion_mode="photometric-only")
        assert config.solver_for_mode().init == "expected"
        assert quick_config().solver_for_mode().init == "argmax"
        forced = quick_config(fusion_mode="photometric-only", solver_init="argmax")
        assert forced.solver_for_mode().init == "argmax"

    def test_warping_helps_second_keyframe(self, intr):
        # Frames 5-9 are rotation-only (no parallax), so keyframe 2 depends
        # on its prior; warping keyframe 1's well-constrained volume in must
        # lower the error.
        frames = make_frames(two_keyframe_poses(), intr)
        model = PriorModel(
            sigma_bins=2.0, uniform_floor=0.2, spurious_mode_prob=0.3,
            spurious_offset_bins=12, seed=3,
        )
        common = dict(
            prior_model=model,
            solver=SolverConfig(regularizer="none", max_iters=10),
        )
        res_warp = run_sequence(frames, PipelineConfig(warp_enabled=True, **common), intr)
        res_plain = run_sequence(frames, PipelineConfig(warp_enabled=False, **common), intr)
        assert len(res_warp) == len(res_plain) == 2
        assert res_warp[1].report.l1_rel < res_plain[1].report.l1_rel


class TestChannelSources:
    def test_file_prior_roundtrip(self, intr, base_frames, tmp_path):
        from pvfusion.dataset_io import save_prior
        from pvfusion.volume import synth_prior

        binning = quick_config().binning()
        frame = base_frames[0]
        vol = synth_prior(frame.gt_depth, PriorModel(seed=5), binning)
        save_prior(vol, tmp_path / "prior_000000.pvol")
        config = quick_config(
            prior_source="file",
            prior_template=str(tmp_path / "prior_{index:06d}.pvol"),
        )
        state = new_keyframe(frame, config, intr)
        assert np.abs(state.base_volume.probs - vol.probs).max() < 1e-6

    def test_boundary_file_source(self, intr, base_frames, tmp_path):
        from pvfusion.dataset_io import save_boundary

        prob = np.zeros((48, 64))
        prob[10, :] = 1.0
        save_boundary(prob, tmp_path / "boundary_000000.obnd")
        config = quick_config(
            boundary_source="file",
            boundary_template=str(tmp_path / "boundary_{index:06d}.obnd"),
        )
        state = new_keyframe(base_frames[0], config, intr)
        assert np.all(state.mask[10, :] == 0.0)
        assert np.all(state.mask[11, :] == 1.0)

    def test_missing_template_rejected(self):
        with pytest.raises(InvalidRangeError):
            PipelineConfig(prior_source="file")

    def test_finalize_without_gt_gives_no_report(self, intr, base_frames):
        config = quick_config()
        frame = dataclasses.replace(base_frames[0], gt_depth=None, index=0)
        # Without gt the synthetic prior cannot be built either.
        with pytest.raises(InvalidRangeError):
            new_keyframe(frame, config, intr)
        config2 = quick_config(prior_source="uniform", normals_source="file")
        with pytest.raises(InvalidRangeError):
            # normals from file needs a template
            new_keyframe(frame, config2, intr)
        config3 = quick_config(prior_source="uniform")
        config3.solver = SolverConfig(regularizer="none", max_iters=0)
        state = new_keyframe(dataclasses.replace(frame, gt_depth=base_frames[0].gt_depth),
                             config3, intr)
        state.frame.gt_depth = None
        result = finalize_keyframe(state, config3, intr)
        assert result.report is None
