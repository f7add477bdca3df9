"""Interchange with the consumer pipeline, exercised through its public
surfaces only: the binary file formats and the `pvfusion` CLI.
"""

import math
import subprocess
import sys

import cv2
import numpy as np
import pytest

from prior_exporter import formats
from prior_exporter.cli import main as exporter_main

PVFUSION = [sys.executable, "-m", "pvfusion"]


def pvfusion(*args):
    return subprocess.run(
        [*PVFUSION, *map(str, args)], capture_output=True, text=True, timeout=600
    )


def write_dataset(base, n_frames=3):
    """TUM-layout directory with a smooth slanted-plane depth field."""
    (base / "rgb").mkdir(parents=True)
    (base / "depth").mkdir()
    rgb_lines, depth_lines, gt_lines = ["# rgb"], ["# depth"], ["# gt"]
    h, w = 480, 640
    uu, vv = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    rng = np.random.default_rng(0)
    texture = (
        128
        + 60 * np.sin(2 * np.pi * 5 * uu / w)
        + 40 * np.cos(2 * np.pi * 3 * vv / h)
    ).astype(np.uint8)
    depth = 1.8 + 0.8 * uu / w + 0.5 * vv / h + 0.08 * np.sin(2 * np.pi * 2 * uu / w)
    for i in range(n_frames):
        ts = 1.0 + 0.1 * i
        img = np.repeat(texture[..., None], 3, axis=2)
        cv2.imwrite(str(base / "rgb" / f"{ts:.6f}.png"), img)
        rgb_lines.append(f"{ts:.6f} rgb/{ts:.6f}.png")
        cv2.imwrite(
            str(base / "depth" / f"{ts:.6f}.png"),
            np.round(depth * 5000).astype(np.uint16),
        )
        depth_lines.append(f"{ts:.6f} depth/{ts:.6f}.png")
        gt_lines.append(f"{ts:.6f} {0.01 * i:.4f} 0.0 0.0 0.0 0.0 0.0 1.0")
    (base / "rgb.txt").write_text("\n".join(rgb_lines) + "\n")
    (base / "depth.txt").write_text("\n".join(depth_lines) + "\n")
    (base / "groundtruth.txt").write_text("\n".join(gt_lines) + "\n")


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    base = tmp_path_factory.mktemp("seq")
    write_dataset(base)
    return base


class TestUniformInterchange:
    def test_dummy_uniform_files_load_in_consumer(self, dataset, tmp_path):
        out = tmp_path / "priors"
        rc = exporter_main(
            ["--images", str(dataset / "rgb" / "*.png"), "--model", "uniform",
             "--out", str(out)]
        )
        assert rc == 0
        files = sorted(out.glob("prior_*.pvol"))
        assert len(files) == 3
        # The consumer's `fuse` loads and validates both inputs; exit 0 means
        # zero validation failures.
        result = pvfusion("fuse", files[0], files[1], tmp_path / "fused.pvol")
        assert result.returncode == 0, result.stderr
        # Uniform is the fusion identity, so output equals input payload.
        fused = (tmp_path / "fused.pvol").read_bytes()
        assert fused == files[0].read_bytes()


class TestOneHotQuantizationBound:
    def test_prior_only_l1_below_half_bin_bound(self, dataset, tmp_path):
        out = tmp_path / "priors"
        rc = exporter_main(
            ["--images", str(dataset / "rgb" / "*.png"),
             "--depths", str(dataset / "depth" / "*.png"),
             "--model", "onehot-gt", "--out", str(out),
             "--emit-normals", "--emit-boundaries"]
        )
        assert rc == 0

        csv_path = tmp_path / "report.csv"
        result = pvfusion(
            "run",
            "--dataset", dataset,
            "--prior-source", "file",
            "--priors", out / "prior_{index:06d}.pvol",
            "--mode", "network-only",
            "--regularizer", "none",
            "--csv", csv_path,
        )
        assert result.returncode == 0, result.stderr

        rows = [line.split(",") for line in csv_path.read_text().splitlines()[1:]]
        overall = [r for r in rows if r[0] == "overall"]
        assert overall
        l1_rel = float(overall[0][2])
        # Half a log-bin: |ln p - ln g| <= delta/2 -> relative error bound.
        bound = math.exp(math.log(12.0 / 0.1) / 64 / 2) - 1.0
        assert bound == pytest.approx(0.0381, abs=2e-4)
        assert l1_rel < bound
        print(f"SECONDARY ACCEPTANCE PASS: one-hot prior L1-rel {l1_rel:.4f} "
              f"< quantization bound {bound:.4f}")


class TestValidationGatekeeping:
    def test_non_unit_normals_rejected_by_consumer(self, dataset, tmp_path):
        out = tmp_path / "priors"
        assert exporter_main(
            ["--images", str(dataset / "rgb" / "*.png"), "--model", "uniform",
             "--out", str(out)]
        ) == 0
        # A broken model writes non-unit normals; the writer passes them
        # through and the consumer's loader must reject the file.
        bad = np.full((192, 256, 3), 0.4)
        for i in range(3):
            formats.write_normals(bad, out / f"normals_{i:06d}.nrml")
        result = pvfusion(
            "run",
            "--dataset", dataset,
            "--prior-source", "file",
            "--priors", out / "prior_{index:06d}.pvol",
            "--normals-source", "file",
            "--normals", out / "normals_{index:06d}.nrml",
            "--mode", "network-only",
            "--max-iters", "1",
        )
        assert result.returncode != 0
        assert "error:" in result.stderr
        assert "non-unit" in result.stderr

    def test_binning_mismatch_rejected(self, dataset, tmp_path):
        out = tmp_path / "priors32"
        assert exporter_main(
            ["--images", str(dataset / "rgb" / "*.png"), "--model", "uniform",
             "--out", str(out), "--bins", "32"]
        ) == 0
        result = pvfusion(
            "run",
            "--dataset", dataset,
            "--prior-source", "file",
            "--priors", out / "prior_{index:06d}.pvol",
            "--mode", "network-only",
            "--max-iters", "1",
        )
        assert result.returncode != 0
        assert "error:" in result.stderr
