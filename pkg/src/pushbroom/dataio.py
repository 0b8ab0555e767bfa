"""On-disk formats: PGM frames, PLY clouds, pose/detection CSVs, calibration
and flat key=value config files, and a minimal PNG encoder for overlays.

Everything textual is written with shortest round-trip float formatting so
outputs are byte-stable across runs and worker counts.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .geometry import Pose, StereoCalibration, quat_normalize


def fmt(v) -> str:
    """Shortest exact decimal for a float, plain digits for ints."""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


# --- PGM ----------------------------------------------------------------------


def write_pgm(path, img: np.ndarray) -> None:
    if img.dtype != np.uint8 or img.ndim != 2:
        raise ValueError(f"PGM writer needs a 2-D uint8 array, got {img.dtype} {img.shape}")
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated PGM header")
        fields.append(data[start:pos])
    magic, w, h, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if magic != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {magic!r})")
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PGM supported, maxval={maxval}")
    pos += 1  # single whitespace after maxval
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos)
    if pixels.size != w * h:
        raise ValueError(f"{path}: expected {w * h} pixels, got {pixels.size}")
    return pixels.reshape(h, w).copy()


# --- PLY ----------------------------------------------------------------------


def write_ply(path, points: np.ndarray) -> None:
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    with open(path, "w", newline="\n") as f:
        f.write("ply\nformat ascii 1.0\n")
        f.write(f"element vertex {points.shape[0]}\n")
        f.write("property float x\nproperty float y\nproperty float z\n")
        f.write("end_header\n")
        for p in points:
            f.write(f"{fmt(p[0])} {fmt(p[1])} {fmt(p[2])}\n")


# --- poses --------------------------------------------------------------------

POSE_HEADER = "t,x,y,z,qw,qx,qy,qz"


def write_poses_csv(path, poses: list[Pose]) -> None:
    with open(path, "w", newline="\n") as f:
        f.write(POSE_HEADER + "\n")
        for p in poses:
            vals = [p.t, *p.position, *p.orientation]
            f.write(",".join(fmt(v) for v in vals) + "\n")


def read_poses_csv(path) -> list[Pose]:
    poses = []
    with open(path) as f:
        header = f.readline().strip()
        if header != POSE_HEADER:
            raise ValueError(f"{path}: expected header '{POSE_HEADER}', got '{header}'")
        for ln, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 8:
                raise ValueError(f"{path}:{ln}: expected 8 fields, got {len(parts)}")
            vals = [float(v) for v in parts]
            poses.append(Pose(vals[0], vals[1:4], quat_normalize(vals[4:8])))
    if not poses:
        raise ValueError(f"{path}: no poses")
    return poses


# --- calibration --------------------------------------------------------------

CALIB_KEYS = ("fx", "fy", "cx", "cy", "baseline_m", "disparity_px")


def write_calib(path, calib: StereoCalibration, disparity: int) -> None:
    with open(path, "w", newline="\n") as f:
        for key, val in zip(
            CALIB_KEYS, (calib.fx, calib.fy, calib.cx, calib.cy, calib.baseline, disparity)
        ):
            f.write(f"{key} = {fmt(val)}\n")


def read_calib(path) -> tuple[StereoCalibration, int]:
    kv = parse_key_values(path)
    missing = [k for k in CALIB_KEYS if k not in kv]
    if missing:
        raise ValueError(f"{path}: missing calibration keys {missing}")
    calib = StereoCalibration(
        fx=float(kv["fx"]),
        fy=float(kv["fy"]),
        cx=float(kv["cx"]),
        cy=float(kv["cy"]),
        baseline=float(kv["baseline_m"]),
    )
    return calib, int(kv["disparity_px"])


# --- flat key=value config ----------------------------------------------------


def parse_key_values(path) -> dict[str, str]:
    """Flat `key = value` file; '#' starts a comment; later keys win."""
    out: dict[str, str] = {}
    with open(path) as f:
        for ln, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{ln}: expected 'key = value', got '{raw.strip()}'")
            key, val = line.split("=", 1)
            out[key.strip()] = val.strip()
    return out


# --- detections CSV -----------------------------------------------------------

DETECTIONS_HEADER = "frame,x_px,y_px,score,edge_sum,Xc,Yc,Zc,Xw,Yw,Zw"


def format_detection_row(frame: int, det, point_world) -> str:
    vals = [
        frame,
        det.x,
        det.y,
        det.score,
        det.edge_sum,
        *det.point_camera,
        *(float(v) for v in point_world),
    ]
    return ",".join(fmt(v) for v in vals)


# --- PNG ----------------------------------------------------------------------


def write_png_rgb(path, rgb: np.ndarray) -> None:
    """Minimal 8-bit RGB PNG encoder (IHDR + one IDAT + IEND)."""
    if rgb.dtype != np.uint8 or rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"PNG writer needs (H, W, 3) uint8, got {rgb.dtype} {rgb.shape}")
    h, w = rgb.shape[:2]

    def chunk(tag: bytes, payload: bytes) -> bytes:
        body = tag + payload
        return struct.pack(">I", len(payload)) + body + struct.pack(">I", zlib.crc32(body))

    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    raw = b"".join(b"\x00" + rgb[i].tobytes() for i in range(h))
    with open(path, "wb") as f:
        f.write(b"\x89PNG\r\n\x1a\n")
        f.write(chunk(b"IHDR", ihdr))
        f.write(chunk(b"IDAT", zlib.compress(raw, 6)))
        f.write(chunk(b"IEND", b""))


# --- dataset layout -----------------------------------------------------------


def frame_path(dataset: Path, side: str, index: int) -> Path:
    return Path(dataset) / side / f"{index:06d}.pgm"


def list_frame_indices(dataset) -> list[int]:
    """Frame indices present in both left/ and right/ of a dataset dir."""
    dataset = Path(dataset)
    out = []
    left_dir = dataset / "left"
    if not left_dir.is_dir():
        return out
    for p in sorted(left_dir.glob("*.pgm")):
        try:
            idx = int(p.stem)
        except ValueError:
            continue
        if frame_path(dataset, "right", idx).exists():
            out.append(idx)
    return out
