"""Probability-volume depth fusion for keyframe reconstruction.

Fuses learned per-pixel depth distributions with plane-sweep photometric
evidence, extracts depth maps by minimizing a KDE-smoothed negative
log-likelihood with normal- or TV-based regularization, and propagates
volumes between keyframes through an occupancy representation.
"""

from ._kernels import BACKEND as kernel_backend
from .geometry import DepthBinning, Intrinsics, Pose, backproject, make_binning, project, relative_pose
from .kde import SmoothedRay, neg_log_pdf_and_grad, pdf_derivative, pdf_value
from .metrics import EvalReport, evaluate
from .photometric import PhotoCostVolume, accumulate_cost, cost_to_probability, normalize_image
from .pipeline import Frame, PipelineConfig, new_keyframe, process_frame, run_sequence
from .solver import SolverConfig, extract_depth, total_cost
from .volume import (
    PriorModel,
    ProbabilityVolume,
    argmax_depth,
    expected_depth,
    fuse,
    ordinal_loss,
    synth_prior,
    uniform_volume,
)
from .warp import (
    OccupancyVolume,
    depth_to_occupancy,
    occupancy_to_depth,
    propagate_keyframe,
    warp_occupancy,
)

__version__ = "0.1.0"
