"""TUM RGB-D ingestion, binary prior/normal/boundary formats, depth export.

Binary formats (all little-endian, shared with the prior exporter):
  PVOL1: magic "PVOL1" | uint32 width, height, k_count | float64 d_min, d_max
         | float32 payload, row-major pixels, bin index fastest.
  NRML1: magic "NRML1" | uint32 width, height | float32 payload, 3 per pixel.
  OBND1: magic "OBND1" | uint32 width, height | float32 payload, 1 per pixel.

PVOL1 rays are stored so that reloading and re-saving reproduces the file
byte for byte: the writer iterates float32 normalization to a fixed point of
the loader's renormalization.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np
from scipy.spatial.transform import Rotation

from .errors import EmptyAssociationError, FileFormatError
from .geometry import Intrinsics, Pose, make_binning
from .volume import ProbabilityVolume

TUM_DEPTH_SCALE = 5000.0
ASSOCIATION_TOLERANCE = 0.02

# Calibrated Freiburg-1 pinhole parameters (distortion ignored; accuracy
# caveat documented in the README).
TUM_FR1_INTRINSICS = Intrinsics(fx=517.3, fy=516.5, cx=318.6, cy=255.3, width=640, height=480)

PIPELINE_WIDTH = 256
PIPELINE_HEIGHT = 192

_PVOL_HEADER = struct.Struct("<5sIIIdd")
_MAP_HEADER = struct.Struct("<5sII")


@dataclass
class FrameRecord:
    timestamp: float
    rgb_path: Path
    depth_path: Path | None
    pose: Pose  # camera-from-world


@dataclass
class SequenceIndex:
    records: list[FrameRecord]
    intrinsics: Intrinsics  # at the source resolution

    def __len__(self) -> int:
        return len(self.records)


def _read_tum_list(path: Path, n_values: int) -> list[tuple[float, list[str]]]:
    if not path.is_file():
        raise FileNotFoundError(f"missing file: {path}")
    rows = []
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) < 1 + n_values:
            raise FileFormatError(f"malformed line in {path.name}: {line!r}")
        rows.append((float(parts[0]), parts[1 : 1 + n_values]))
    return rows


def _pose_from_tum(values: list[str]) -> Pose:
    tx, ty, tz, qx, qy, qz, qw = (float(v) for v in values)
    # TUM ground truth is world-from-camera; invert to camera-from-world.
    r_wc = Rotation.from_quat([qx, qy, qz, qw]).as_matrix()
    r_cw = r_wc.T
    return Pose(r_cw, -r_cw @ np.array([tx, ty, tz]))


def _nearest(timestamps: np.ndarray, query: float) -> int:
    i = int(np.searchsorted(timestamps, query))
    best = None
    for j in (i - 1, i):
        if 0 <= j < len(timestamps):
            if best is None or abs(timestamps[j] - query) < abs(timestamps[best] - query):
                best = j
    return best


def load_tum_sequence(
    dir_path: str | Path,
    association_tolerance: float = ASSOCIATION_TOLERANCE,
    intrinsics: Intrinsics = TUM_FR1_INTRINSICS,
) -> SequenceIndex:
    """Index a TUM RGB-D directory (rgb.txt + groundtruth.txt, depth.txt optional).

    Each rgb frame associates with the nearest ground-truth pose and nearest
    depth frame within the tolerance; frames without a pose match are
    skipped.

    Raises:
        FileNotFoundError: rgb.txt or groundtruth.txt missing.
        EmptyAssociationError: no frame found a pose within tolerance.
    """
    base = Path(dir_path)
    rgb_rows = _read_tum_list(base / "rgb.txt", 1)
    gt_rows = _read_tum_list(base / "groundtruth.txt", 7)
    depth_path = base / "depth.txt"
    depth_rows = _read_tum_list(depth_path, 1) if depth_path.is_file() else []

    gt_ts = np.array([t for t, _ in gt_rows])
    depth_ts = np.array([t for t, _ in depth_rows]) if depth_rows else None

    records: list[FrameRecord] = []
    last_ts = -math.inf
    for ts, (rel_rgb,) in sorted(rgb_rows, key=lambda r: r[0]):
        if ts <= last_ts:
            continue
        gi = _nearest(gt_ts, ts)
        if gi is None or abs(gt_ts[gi] - ts) > association_tolerance:
            continue
        depth_file = None
        if depth_ts is not None and len(depth_ts):
            di = _nearest(depth_ts, ts)
            if di is not None and abs(depth_ts[di] - ts) <= association_tolerance:
                depth_file = base / depth_rows[di][1][0]
        records.append(
            FrameRecord(
                timestamp=ts,
                rgb_path=base / rel_rgb,
                depth_path=depth_file,
                pose=_pose_from_tum(gt_rows[gi][1]),
            )
        )
        last_ts = ts
    if not records:
        raise EmptyAssociationError("no rgb frame matched a ground-truth pose")
    return SequenceIndex(records=records, intrinsics=intrinsics)


def downsample_depth_nearest_valid(depth: np.ndarray, dst_w: int, dst_h: int) -> np.ndarray:
    """Downsample a depth map by sampling the nearest valid source pixel.

    Avoids area averaging, which mixes depths across discontinuities. Target
    pixels whose 5x5 source neighborhood holds no valid depth come out
    invalid (0).
    """
    src_h, src_w = depth.shape
    sy = src_h / dst_h
    sx = src_w / dst_w
    ys = np.clip(np.round((np.arange(dst_h) + 0.5) * sy - 0.5).astype(np.int64), 0, src_h - 1)
    xs = np.clip(np.round((np.arange(dst_w) + 0.5) * sx - 0.5).astype(np.int64), 0, src_w - 1)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    out = depth[yy, xx]
    invalid = ~(np.isfinite(out) & (out > 0))
    if np.any(invalid):
        offsets = sorted(
            ((dy, dx) for dy in range(-2, 3) for dx in range(-2, 3)),
            key=lambda o: (o[0] ** 2 + o[1] ** 2),
        )
        for dy, dx in offsets[1:]:
            if not np.any(invalid):
                break
            cand = depth[
                np.clip(yy + dy, 0, src_h - 1), np.clip(xx + dx, 0, src_w - 1)
            ]
            ok = invalid & np.isfinite(cand) & (cand > 0)
            out[ok] = cand[ok]
            invalid &= ~ok
        out[invalid] = 0.0
    return np.where(np.isfinite(out), out, 0.0)


def load_frame_images(
    record: FrameRecord,
    target_width: int = PIPELINE_WIDTH,
    target_height: int = PIPELINE_HEIGHT,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Load and downsample one frame's rgb (+ depth when present).

    Returns (rgb float64 (H, W, 3) in [0, 255], depth float64 metres | None).
    """
    bgr = cv2.imread(str(record.rgb_path), cv2.IMREAD_COLOR)
    if bgr is None:
        raise FileNotFoundError(f"cannot read image: {record.rgb_path}")
    rgb = cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)
    rgb = cv2.resize(rgb, (target_width, target_height), interpolation=cv2.INTER_AREA)
    depth = None
    if record.depth_path is not None:
        raw = cv2.imread(str(record.depth_path), cv2.IMREAD_UNCHANGED)
        if raw is None:
            raise FileNotFoundError(f"cannot read depth: {record.depth_path}")
        depth = raw.astype(np.float64) / TUM_DEPTH_SCALE
        depth = downsample_depth_nearest_valid(depth, target_width, target_height)
    return rgb.astype(np.float64), depth


# --- PVOL1 / NRML1 / OBND1 -------------------------------------------------

RAY_SUM_TOLERANCE = 1e-4
_FIXED_POINT_ITERS = 32


def _float32_fixed_point(rays64: np.ndarray) -> np.ndarray:
    """float32 rays that are a fixed point of load-time renormalization.

    Iterates q <- float32(q / sum(q)) until the bits stop changing, so that
    save(load(file)) reproduces file payloads exactly.
    """
    q = rays64.astype(np.float32)
    for _ in range(_FIXED_POINT_ITERS):
        s = q.astype(np.float64).sum(axis=1, keepdims=True)
        q_next = (q.astype(np.float64) / s).astype(np.float32)
        if np.array_equal(q_next, q):
            return q
        q = q_next
    raise RuntimeError("float32 ray normalization did not reach a fixed point")


def save_prior(vol: ProbabilityVolume, path: str | Path) -> None:
    """Write a probability volume as a PVOL1 file."""
    h, w, k = vol.probs.shape
    payload = _float32_fixed_point(vol.probs.reshape(-1, k)).tobytes()
    header = _PVOL_HEADER.pack(b"PVOL1", w, h, k, vol.binning.d_min, vol.binning.d_max)
    Path(path).write_bytes(header + payload)


def load_prior(path: str | Path):
    """Read a PVOL1 file into a ProbabilityVolume (rays renormalized).

    Raises:
        FileFormatError: bad magic, size mismatch, non-finite or negative
            values, or a ray sum off by more than RAY_SUM_TOLERANCE.
    """
    blob = Path(path).read_bytes()
    if len(blob) < _PVOL_HEADER.size:
        raise FileFormatError("size-mismatch: truncated header")
    magic, w, h, k, d_min, d_max = _PVOL_HEADER.unpack_from(blob)
    if magic != b"PVOL1":
        raise FileFormatError(f"bad-magic: {magic!r}")
    expected = _PVOL_HEADER.size + w * h * k * 4
    if len(blob) != expected:
        raise FileFormatError(f"size-mismatch: {len(blob)} bytes, expected {expected}")
    raw = np.frombuffer(blob, dtype="<f4", offset=_PVOL_HEADER.size).astype(np.float64)
    if not np.all(np.isfinite(raw)):
        raise FileFormatError("non-finite-values in payload")
    if np.any(raw < 0):
        raise FileFormatError("negative probability in payload")
    rays = raw.reshape(-1, k)
    sums = rays.sum(axis=1, keepdims=True)
    if np.any(np.abs(sums - 1.0) > RAY_SUM_TOLERANCE):
        worst = float(np.abs(sums - 1.0).max())
        raise FileFormatError(f"unnormalized-ray: worst deviation {worst:.2e}")
    probs = (rays / sums).reshape(h, w, k)
    return ProbabilityVolume(make_binning(d_min, d_max, k), probs)


def save_normals(normals: np.ndarray, path: str | Path) -> None:
    h, w, _ = normals.shape
    header = _MAP_HEADER.pack(b"NRML1", w, h)
    Path(path).write_bytes(header + normals.astype("<f4").tobytes())


def load_normals(path: str | Path) -> np.ndarray:
    """Read an NRML1 file; valid normals renormalized to unit length.

    Zero vectors mark invalid pixels. Non-unit valid normals (off by more
    than 1e-3) are rejected.
    """
    blob = Path(path).read_bytes()
    if len(blob) < _MAP_HEADER.size:
        raise FileFormatError("size-mismatch: truncated header")
    magic, w, h = _MAP_HEADER.unpack_from(blob)
    if magic != b"NRML1":
        raise FileFormatError(f"bad-magic: {magic!r}")
    if len(blob) != _MAP_HEADER.size + w * h * 12:
        raise FileFormatError("size-mismatch")
    raw = np.frombuffer(blob, dtype="<f4", offset=_MAP_HEADER.size).astype(np.float64)
    if not np.all(np.isfinite(raw)):
        raise FileFormatError("non-finite-values in payload")
    n = raw.reshape(h, w, 3)
    norms = np.linalg.norm(n, axis=2)
    valid = norms > 0
    if np.any(np.abs(norms[valid] - 1.0) > 1e-3):
        raise FileFormatError("non-unit normal in payload")
    out = np.zeros_like(n)
    out[valid] = n[valid] / norms[valid][:, None]
    return out


def save_boundary(prob_map: np.ndarray, path: str | Path) -> None:
    h, w = prob_map.shape
    header = _MAP_HEADER.pack(b"OBND1", w, h)
    Path(path).write_bytes(header + prob_map.astype("<f4").tobytes())


def load_boundary(path: str | Path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) < _MAP_HEADER.size:
        raise FileFormatError("size-mismatch: truncated header")
    magic, w, h = _MAP_HEADER.unpack_from(blob)
    if magic != b"OBND1":
        raise FileFormatError(f"bad-magic: {magic!r}")
    if len(blob) != _MAP_HEADER.size + w * h * 4:
        raise FileFormatError("size-mismatch")
    raw = np.frombuffer(blob, dtype="<f4", offset=_MAP_HEADER.size).astype(np.float64)
    if not np.all(np.isfinite(raw)) or np.any(raw < 0) or np.any(raw > 1):
        raise FileFormatError("boundary probabilities must lie in [0, 1]")
    return raw.reshape(h, w)


# --- Depth PNG export ------------------------------------------------------


def export_depth_png(depth: np.ndarray, path: str | Path) -> int:
    """Write 16-bit TUM-convention depth PNG (value = depth * 5000, 0 invalid).

    Returns the number of pixels clamped at the uint16 ceiling.
    """
    valid = np.isfinite(depth) & (depth > 0)
    scaled = np.where(valid, np.round(depth * TUM_DEPTH_SCALE), 0.0)
    clamped = int(np.count_nonzero(scaled > 65535))
    png = np.clip(scaled, 0, 65535).astype(np.uint16)
    if not cv2.imwrite(str(path), png):
        raise IOError(f"failed to write {path}")
    return clamped


def load_depth_png(path: str | Path) -> np.ndarray:
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FileNotFoundError(f"cannot read depth: {path}")
    return raw.astype(np.float64) / TUM_DEPTH_SCALE
