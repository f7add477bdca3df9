"""Benchmark the compiled extension against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats N]

Times the three hot kernels at pipeline resolution (256x192x64) plus a full
100-iteration depth extraction, calling both backend implementations
directly so one process covers both.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from pvfusion import _kernels_np
from pvfusion.geometry import make_binning

try:
    from pvfusion import _native
except ImportError:
    _native = None


H, W, K = 192, 256, 64


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_kde(repeats):
    rng = np.random.default_rng(0)
    binning = make_binning(0.1, 12.0, K)
    probs = rng.dirichlet(np.ones(K), size=(H, W))
    depth = rng.uniform(0.5, 8.0, size=(H, W))
    cost = np.empty((H, W))
    grad = np.empty((H, W))

    t_np = timeit(lambda: _kernels_np.kde_cost_grad(probs, binning.midpoints, 0.1, depth), repeats)
    t_nat = None
    if _native is not None:
        t_nat = timeit(
            lambda: _native.kde_cost_grad(probs, binning.midpoints, 0.1, depth, cost, grad),
            repeats,
        )
    return "kde_cost_grad", f"{H}x{W}x{K}", t_np, t_nat


def bench_accumulate(repeats):
    rng = np.random.default_rng(1)
    binning = make_binning(0.1, 12.0, K)
    kf = rng.standard_normal((H, W))
    ref = rng.standard_normal((H, W))
    rot = np.eye(3)
    t = np.array([0.1, 0.02, 0.01])
    args = (kf, ref, rot, t, 204.8, 204.8, 127.5, 95.5, binning.midpoints)

    def run_np():
        cost = np.zeros((H, W, K))
        count = np.zeros((H, W, K), dtype=np.int32)
        _kernels_np.accumulate_cost(cost, count, *args)

    def run_nat():
        cost = np.zeros((H, W, K))
        count = np.zeros((H, W, K), dtype=np.int32)
        _native.accumulate_cost(cost, count, *args)

    t_np = timeit(run_np, repeats)
    t_nat = timeit(run_nat, repeats) if _native is not None else None
    return "accumulate_cost", f"{H}x{W}x{K}", t_np, t_nat


def bench_warp(repeats):
    rng = np.random.default_rng(2)
    binning = make_binning(0.1, 12.0, K)
    occ = rng.random((H, W, K))
    rot = np.eye(3)
    t = np.array([0.05, -0.02, 0.1])
    args = (occ, rot, t, 204.8, 204.8, 127.5, 95.5, binning.midpoints,
            np.log(0.1), np.log(12.0), 0.01)

    t_np = timeit(lambda: _kernels_np.warp_occupancy_sample(*args), repeats)
    t_nat = None
    if _native is not None:
        out = np.empty_like(occ)
        t_nat = timeit(lambda: _native.warp_occupancy_sample(*args, out), repeats)
    return "warp_occupancy", f"{H}x{W}x{K}", t_np, t_nat


def bench_solver(repeats):
    import pvfusion._kernels as dispatch
    from pvfusion.regularizer import normals_from_depth
    from pvfusion.solver import SolverConfig, extract_depth
    from pvfusion.volume import PriorModel, synth_prior
    from pvfusion.geometry import Intrinsics

    binning = make_binning(0.1, 12.0, K)
    intr = Intrinsics(fx=204.8, fy=204.8, cx=127.5, cy=95.5, width=W, height=H)
    rng = np.random.default_rng(3)
    gt = 2.0 + 0.5 * np.sin(np.linspace(0, 6, W))[None, :] * np.ones((H, 1))
    vol = synth_prior(gt, PriorModel(sigma_bins=2.0, uniform_floor=0.2), binning)
    normals = normals_from_depth(gt, intr)
    config = SolverConfig(regularizer="normals", max_iters=100, stop_tol=0.0)

    results = {}
    for label, module in (("numpy", None), ("native", _native)):
        if label == "native" and _native is None:
            continue
        saved = dispatch._native
        dispatch._native = module
        try:
            results[label] = timeit(
                lambda: extract_depth(vol, normals, np.ones((H, W)), intr, config),
                max(1, repeats // 2),
            )
        finally:
            dispatch._native = saved
    return "extract_depth(100it)", f"{H}x{W}x{K}", results.get("numpy"), results.get("native")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    if _native is None:
        print("compiled extension unavailable; timing the numpy fallback only\n")

    rows = [
        bench_kde(args.repeats),
        bench_accumulate(args.repeats),
        bench_warp(args.repeats),
        bench_solver(args.repeats),
    ]
    header = f"{'kernel':<22} {'shape':<14} {'numpy':>10} {'native':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, shape, t_np, t_nat in rows:
        np_ms = f"{t_np * 1e3:.1f}ms" if t_np is not None else "-"
        nat_ms = f"{t_nat * 1e3:.1f}ms" if t_nat is not None else "-"
        speedup = f"{t_np / t_nat:.1f}x" if (t_np and t_nat) else "-"
        print(f"{name:<22} {shape:<14} {np_ms:>10} {nat_ms:>10} {speedup:>8}")


if __name__ == "__main__":
    main()
