"""Command-line interface.

Subcommands:
  run          full pipeline over a TUM-format directory
  make-priors  synthetic PVOL1 (and optional NRML1/OBND1) files from GT depth
  fuse         one-shot fusion of two PVOL1 files
  eval         metrics between two 16-bit depth PNGs
  ablate       emits the three ablation table layouts

Errors exit nonzero with one machine-parsable line on stderr:
  error: <kind>: <message>
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import dataset_io
from .errors import PvfusionError
from .metrics import EvalReport, evaluate, format_csv, format_table
from .pipeline import (
    KeyframeResult,
    PipelineConfig,
    iter_sequence_frames,
    run_sequence,
)
from .solver import SolverConfig
from .volume import PriorModel, fuse as fuse_volumes


def _parse_config_file(path: str) -> dict[str, str]:
    """key=value lines; '#' starts a comment; blank lines ignored."""
    out: dict[str, str] = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise PvfusionError(f"config line missing '=': {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _as_bool(value: str) -> bool:
    v = value.lower()
    if v in _BOOL_TRUE:
        return True
    if v in _BOOL_FALSE:
        return False
    raise PvfusionError(f"not a boolean: {value!r}")


def _apply_config_file(args: argparse.Namespace) -> None:
    """Config file supplies values for options the command line left at None."""
    if not getattr(args, "config", None):
        return
    table = _parse_config_file(args.config)
    for key, value in table.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise PvfusionError(f"unknown config key: {key}")
        if getattr(args, attr) is None:
            current_type = {
                "overlap_tau": float,
                "max_ref_frames": int,
                "max_frames": int,
                "reg_lambda": float,
                "step_size": float,
                "max_iters": int,
                "sigma_bins": float,
                "uniform_floor": float,
                "spurious_prob": float,
                "spurious_offset": int,
                "seed": int,
                "warp": _as_bool,
                "backtracking": _as_bool,
            }.get(attr, str)
            setattr(args, attr, current_type(value))


def _pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    def pick(name, default):
        v = getattr(args, name, None)
        return default if v is None else v

    solver = SolverConfig(
        regularizer=pick("regularizer", "normals"),
        max_iters=int(pick("max_iters", 100)),
        step_size=float(pick("step_size", 0.2)),
        reg_lambda=getattr(args, "reg_lambda", None),
        backtracking=pick("backtracking", True),
    )
    model = PriorModel(
        sigma_bins=float(pick("sigma_bins", 2.0)),
        uniform_floor=float(pick("uniform_floor", 0.1)),
        spurious_mode_prob=float(pick("spurious_prob", 0.0)),
        spurious_offset_bins=int(pick("spurious_offset", 12)),
        seed=int(pick("seed", 0)),
    )
    return PipelineConfig(
        fusion_mode=pick("mode", "fused"),
        prior_source=pick("prior_source", "synthetic"),
        normals_source=pick("normals_source", "from-gt-depth"),
        boundary_source=pick("boundary_source", "none"),
        prior_template=getattr(args, "priors", None),
        normals_template=getattr(args, "normals", None),
        boundary_template=getattr(args, "boundaries", None),
        prior_model=model,
        overlap_tau=float(pick("overlap_tau", 0.8)),
        max_ref_frames=getattr(args, "max_ref_frames", None),
        warp_enabled=pick("warp", True),
        solver=solver,
    )


def _frame_stream(args: argparse.Namespace):
    sequence = dataset_io.load_tum_sequence(args.dataset)
    scale = dataset_io.PIPELINE_WIDTH / sequence.intrinsics.width
    intrinsics = sequence.intrinsics.scaled(scale)
    frames = iter_sequence_frames(sequence, max_frames=getattr(args, "max_frames", None))
    return frames, intrinsics


def _load_frames(args: argparse.Namespace):
    frames, intrinsics = _frame_stream(args)
    return list(frames), intrinsics


def _emit_results(
    results: list[KeyframeResult], label: str, out_dir: str | None, csv_path: str | None
) -> None:
    rows = [
        (f"kf{r.index:04d}", label, r.report)
        for r in results
        if r.report is not None
    ]
    agg = aggregate_reports([r.report for r in results if r.report is not None])
    if agg is not None:
        rows.append(("overall", label, agg))
    if rows:
        print(format_table(rows))
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for r in results:
            dataset_io.export_depth_png(r.depth, out / f"keyframe_{r.index:06d}.png")
        (out / "trace.txt").write_text(
            "\n\n".join(f"keyframe {r.index}\n{r.diagnostics.trace_table()}" for r in results)
        )
    if csv_path and rows:
        Path(csv_path).write_text(format_csv(rows))


def aggregate_reports(reports: list[EvalReport]) -> EvalReport | None:
    """Pixel-weighted pooling of per-keyframe reports."""
    if not reports:
        return None
    n = sum(r.valid_pixel_count for r in reports)
    return EvalReport(
        l1_rel=sum(r.l1_rel * r.valid_pixel_count for r in reports) / n,
        l2_rel=sum(r.l2_rel * r.valid_pixel_count for r in reports) / n,
        rmse=float(np.sqrt(sum(r.rmse**2 * r.valid_pixel_count for r in reports) / n)),
        valid_pixel_count=n,
    )


def _cmd_run(args: argparse.Namespace) -> int:
    _apply_config_file(args)
    config = _pipeline_config(args)
    frames, intrinsics = _frame_stream(args)
    results = run_sequence(frames, config, intrinsics)
    _emit_results(results, config.fusion_mode, args.out, args.csv)
    return 0


def _cmd_make_priors(args: argparse.Namespace) -> int:
    _apply_config_file(args)
    model = PriorModel(
        sigma_bins=float(args.sigma_bins if args.sigma_bins is not None else 2.0),
        uniform_floor=float(args.uniform_floor if args.uniform_floor is not None else 0.1),
        spurious_mode_prob=float(args.spurious_prob if args.spurious_prob is not None else 0.0),
        spurious_offset_bins=int(args.spurious_offset if args.spurious_offset is not None else 12),
        seed=int(args.seed if args.seed is not None else 0),
    )
    from .geometry import make_binning
    from .regularizer import normals_from_depth
    from .volume import synth_prior

    binning = make_binning(0.1, 12.0, 64)
    frames, intrinsics = _load_frames(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    count = 0
    for frame in frames:
        if frame.gt_depth is None:
            continue
        vol = synth_prior(frame.gt_depth, model, binning)
        dataset_io.save_prior(vol, out / f"prior_{frame.index:06d}.pvol")
        if args.emit_normals:
            dataset_io.save_normals(
                normals_from_depth(frame.gt_depth, intrinsics),
                out / f"normals_{frame.index:06d}.nrml",
            )
        if args.emit_boundaries:
            edges = _depth_discontinuity_prob(frame.gt_depth)
            dataset_io.save_boundary(edges, out / f"boundary_{frame.index:06d}.obnd")
        count += 1
    print(f"wrote {count} prior volumes to {out}")
    return 0


def _depth_discontinuity_prob(depth: np.ndarray) -> np.ndarray:
    """Soft occlusion-boundary probabilities from relative depth jumps."""
    h, w = depth.shape
    jump = np.zeros((h, w))
    safe = np.where(depth > 0, depth, np.inf)
    dx = np.abs(np.diff(safe, axis=1)) / np.minimum(safe[:, 1:], safe[:, :-1])
    dy = np.abs(np.diff(safe, axis=0)) / np.minimum(safe[1:, :], safe[:-1, :])
    jump[:, :-1] = np.maximum(jump[:, :-1], np.nan_to_num(dx))
    jump[:, 1:] = np.maximum(jump[:, 1:], np.nan_to_num(dx))
    jump[:-1, :] = np.maximum(jump[:-1, :], np.nan_to_num(dy))
    jump[1:, :] = np.maximum(jump[1:, :], np.nan_to_num(dy))
    # 10% relative jump maps to probability ~0.5, saturating at 1.
    return np.clip(jump / 0.2, 0.0, 1.0)


def _cmd_fuse(args: argparse.Namespace) -> int:
    a = dataset_io.load_prior(args.volume_a)
    b = dataset_io.load_prior(args.volume_b)
    dataset_io.save_prior(fuse_volumes(a, b), args.output)
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    pred = dataset_io.load_depth_png(args.pred)
    gt = dataset_io.load_depth_png(args.gt)
    rep = evaluate(pred, gt)
    if args.csv:
        print(format_csv([("eval", "pred-vs-gt", rep)]), end="")
    else:
        print(format_table([("eval", "pred-vs-gt", rep)]), end="")
    return 0


def _cmd_ablate(args: argparse.Namespace) -> int:
    _apply_config_file(args)
    base_config = _pipeline_config(args)
    frames, intrinsics = _load_frames(args)
    which = args.table
    rows: list[tuple[str, str, EvalReport]] = []

    def run_with(label: str, **overrides) -> None:
        cfg = dataclasses.replace(base_config, **overrides)
        results = run_sequence(frames, cfg, intrinsics)
        agg = aggregate_reports([r.report for r in results if r.report is not None])
        if agg is not None:
            rows.append((args.label, label, agg))

    if which in ("1", "all"):
        rows.clear()
        for mode in ("network-only", "photometric-only", "fused"):
            run_with({"network-only": "Network-Only",
                      "photometric-only": "Photometric-Only",
                      "fused": "Fused"}[mode], fusion_mode=mode)
        print(format_table(rows, title="Fusion ablation"))
    if which in ("2", "all"):
        rows.clear()
        solver = base_config.solver
        run_with("No Optimisation", solver=dataclasses.replace(solver, max_iters=0))
        run_with("Smoothing-Only", solver=dataclasses.replace(solver, regularizer="none"))
        run_with("Total Variation", solver=dataclasses.replace(solver, regularizer="tv"))
        run_with("Normals + Occlusions", solver=dataclasses.replace(solver, regularizer="normals"))
        print(format_table(rows, title="Regularization ablation"))
    if which in ("3", "all"):
        rows.clear()
        run_with("No Keyframe Warping", warp_enabled=False)
        run_with("Keyframe Warping", warp_enabled=True)
        print(format_table(rows, title="Keyframe warping ablation"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pvfusion", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--dataset", required=True, help="TUM-format sequence directory")
        sp.add_argument("--config", help="key=value config file")
        sp.add_argument("--max-frames", type=int, default=None, dest="max_frames")

    run = sub.add_parser("run", help="run the full pipeline")
    add_common(run)
    run.add_argument("--out", help="output directory for depth PNGs and traces")
    run.add_argument("--csv", help="write the metrics table as CSV")
    run.add_argument("--mode", choices=["fused", "network-only", "photometric-only"])
    run.add_argument("--regularizer", choices=["none", "tv", "normals"])
    run.add_argument("--reg-lambda", type=float, default=None, dest="reg_lambda")
    run.add_argument("--step-size", type=float, default=None, dest="step_size")
    run.add_argument("--max-iters", type=int, default=None, dest="max_iters")
    run.add_argument("--no-backtracking", action="store_const", const=False,
                     default=None, dest="backtracking")
    run.add_argument("--warp", action="store_const", const=True, default=None)
    run.add_argument("--no-warp", action="store_const", const=False, dest="warp")
    run.add_argument("--prior-source", choices=["file", "synthetic", "uniform"],
                     dest="prior_source")
    run.add_argument("--normals-source", choices=["file", "from-gt-depth"],
                     dest="normals_source")
    run.add_argument("--boundary-source", choices=["file", "none"], dest="boundary_source")
    run.add_argument("--priors", help="PVOL1 path template, e.g. priors/prior_{index:06d}.pvol")
    run.add_argument("--normals", help="NRML1 path template")
    run.add_argument("--boundaries", help="OBND1 path template")
    run.add_argument("--overlap-tau", type=float, default=None, dest="overlap_tau")
    run.add_argument("--max-ref-frames", type=int, default=None, dest="max_ref_frames")
    for name in ("sigma_bins", "uniform_floor", "spurious_prob"):
        run.add_argument(f"--{name.replace('_', '-')}", type=float, default=None, dest=name)
    run.add_argument("--spurious-offset", type=int, default=None, dest="spurious_offset")
    run.add_argument("--seed", type=int, default=None)
    run.set_defaults(func=_cmd_run)

    mk = sub.add_parser("make-priors", help="synthesize prior files from GT depth")
    add_common(mk)
    mk.add_argument("--out", required=True)
    mk.add_argument("--sigma-bins", type=float, default=None, dest="sigma_bins")
    mk.add_argument("--uniform-floor", type=float, default=None, dest="uniform_floor")
    mk.add_argument("--spurious-prob", type=float, default=None, dest="spurious_prob")
    mk.add_argument("--spurious-offset", type=int, default=None, dest="spurious_offset")
    mk.add_argument("--seed", type=int, default=None)
    mk.add_argument("--emit-normals", action="store_true")
    mk.add_argument("--emit-boundaries", action="store_true")
    mk.set_defaults(func=_cmd_make_priors)

    fz = sub.add_parser("fuse", help="fuse two PVOL1 files")
    fz.add_argument("volume_a")
    fz.add_argument("volume_b")
    fz.add_argument("output")
    fz.set_defaults(func=_cmd_fuse)

    ev = sub.add_parser("eval", help="metrics between two depth PNGs")
    ev.add_argument("pred")
    ev.add_argument("gt")
    ev.add_argument("--csv", action="store_true")
    ev.set_defaults(func=_cmd_eval)

    ab = sub.add_parser("ablate", help="emit ablation tables")
    add_common(ab)
    ab.add_argument("--table", choices=["1", "2", "3", "all"], default="all")
    ab.add_argument("--label", default="sequence")
    ab.add_argument("--mode", choices=["fused", "network-only", "photometric-only"])
    ab.add_argument("--regularizer", choices=["none", "tv", "normals"])
    ab.add_argument("--max-iters", type=int, default=None, dest="max_iters")
    ab.add_argument("--step-size", type=float, default=None, dest="step_size")
    ab.add_argument("--reg-lambda", type=float, default=None, dest="reg_lambda")
    ab.add_argument("--warp", action="store_const", const=True, default=None)
    ab.add_argument("--no-warp", action="store_const", const=False, dest="warp")
    ab.add_argument("--prior-source", choices=["file", "synthetic", "uniform"],
                    dest="prior_source")
    ab.add_argument("--priors")
    ab.add_argument("--normals")
    ab.add_argument("--boundaries")
    ab.add_argument("--normals-source", choices=["file", "from-gt-depth"], dest="normals_source")
    ab.add_argument("--boundary-source", choices=["file", "none"], dest="boundary_source")
    ab.add_argument("--overlap-tau", type=float, default=None, dest="overlap_tau")
    ab.add_argument("--max-ref-frames", type=int, default=None, dest="max_ref_frames")
    for name in ("sigma_bins", "uniform_floor", "spurious_prob"):
        ab.add_argument(f"--{name.replace('_', '-')}", type=float, default=None, dest=name)
    ab.add_argument("--spurious-offset", type=int, default=None, dest="spurious_offset")
    ab.add_argument("--seed", type=int, default=None)
    ab.set_defaults(func=_cmd_ablate)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PvfusionError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, IOError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
