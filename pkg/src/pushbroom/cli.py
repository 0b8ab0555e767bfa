"""Pipeline driver: dataset ingestion, per-frame orchestration, benchmark
runs, and all file emissions.

Subcommands:
  detect     run the single-disparity matcher + odometry sweep over a dataset
  benchmark  detector vs exhaustive block-matching reference, metrics JSON
  synth      render a synthetic dataset from a scene description file

Datasets are flat directories: left/%06d.pgm, right/%06d.pgm, calib.txt,
optional poses.csv and ground_truth/.  All CSV/JSON/PLY outputs are
byte-identical for a given dataset + config + seed, whatever the worker
count; overlay PNGs never influence them.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dataio, metrics, oracle, synth
from .detector import Detection, PushbroomConfig, process_frame
from .geometry import (
    ObstacleCloud,
    Pose,
    StereoCalibration,
    integrate_constant_velocity,
    interpolate_pose,
    transform_to_camera,
    transform_to_world,
)


@dataclass
class RunConfig:
    """Fully resolved settings of one detect/benchmark run."""

    dataset: Path
    out: Path
    calib: StereoCalibration
    detector: PushbroomConfig
    workers: int = 8
    overlays: bool = False
    sweep: bool = True
    seed: int = 0
    fps: float = 120.0
    retention: float = 3.0
    behind_margin: float = 0.5
    velocity: tuple[float, float, float] = (0.0, 0.0, 9.0)
    oracle_min_disparity: int = 0
    oracle_max_disparity: int = 0
    oracle_uniqueness_ratio: float = 0.9
    depth_crop_tolerance: float = 0.5
    baseline_depth_range: tuple[float, float] = (0.5, 20.0)


class CliError(Exception):
    """Raised for invalid input; printed as a one-line error, exit code 2."""


def _parse_floats(text: str, n: int, what: str) -> tuple[float, ...]:
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != n:
        raise CliError(f"{what}: expected {n} numbers, got '{text}'")
    return tuple(float(p) for p in parts)


def load_run_config(args) -> RunConfig:
    dataset = Path(args.dataset)
    if not dataset.is_dir():
        raise CliError(f"dataset directory not found: {dataset}")
    calib_path = dataset / "calib.txt"
    if not calib_path.exists():
        raise CliError(f"calibration file not found: {calib_path}")
    if not dataio.list_frame_indices(dataset):
        raise CliError(f"no frame pairs under {dataset}/left and {dataset}/right")

    calib, disparity = dataio.read_calib(calib_path)

    kv: dict[str, str] = {}
    if args.config:
        config_path = Path(args.config)
        if not config_path.exists():
            raise CliError(f"config file not found: {config_path}")
        kv = dataio.parse_key_values(config_path)

    def get(key, cast, default):
        return cast(kv[key]) if key in kv else default

    disparity = get("disparity_px", int, disparity)
    offsets = PushbroomConfig.__dataclass_fields__["invariance_offsets"].default
    if "invariance_offsets" in kv:
        offsets = tuple(int(p) for p in kv["invariance_offsets"].replace(",", " ").split())
    if args.invariance_filter == "off":
        offsets = ()

    detector = PushbroomConfig(
        disparity=disparity,
        edge_threshold=get("edge_threshold", int, 100),
        score_threshold=get("score_threshold", float, 0.5),
        invariance_offsets=offsets,
        invariance_score_threshold=get("invariance_score_threshold", float, None),
        scan_stride=get("scan_stride", int, 1),
    )

    velocity = (0.0, 0.0, 9.0)
    if "velocity_mps" in kv:
        velocity = _parse_floats(kv["velocity_mps"], 3, "velocity_mps")
    depth_range = (0.5, 20.0)
    if "baseline_depth_range_m" in kv:
        depth_range = _parse_floats(kv["baseline_depth_range_m"], 2, "baseline_depth_range_m")

    cfg = RunConfig(
        dataset=dataset,
        out=Path(args.out),
        calib=calib,
        detector=detector,
        workers=args.workers if args.workers is not None else get("workers", int, 8),
        overlays=bool(args.overlays),
        sweep=args.sweep,
        seed=args.seed if args.seed is not None else get("seed", int, 0),
        fps=get("fps", float, 120.0),
        retention=get("retention_s", float, 3.0),
        behind_margin=get("behind_margin_m", float, 0.5),
        velocity=velocity,
        oracle_min_disparity=get("oracle_min_disparity", int, max(1, disparity // 2)),
        oracle_max_disparity=get("oracle_max_disparity", int, 2 * disparity),
        oracle_uniqueness_ratio=get("oracle_uniqueness_ratio", float, 0.9),
        depth_crop_tolerance=get("depth_crop_tolerance_m", float, 0.5),
        baseline_depth_range=depth_range,
    )
    if cfg.workers < 1:
        raise CliError(f"workers must be >= 1, got {cfg.workers}")
    return cfg


def _config_echo(cfg: RunConfig) -> dict:
    return {
        "dataset": str(cfg.dataset),
        "calibration": {
            "fx": cfg.calib.fx,
            "fy": cfg.calib.fy,
            "cx": cfg.calib.cx,
            "cy": cfg.calib.cy,
            "baseline_m": cfg.calib.baseline,
        },
        "detector": {
            "disparity": cfg.detector.disparity,
            "edge_threshold": cfg.detector.edge_threshold,
            "score_threshold": cfg.detector.score_threshold,
            "invariance_offsets": list(cfg.detector.invariance_offsets),
            "invariance_score_threshold": cfg.detector.invariance_score_threshold,
            "scan_stride": cfg.detector.scan_stride,
        },
        "workers": cfg.workers,
        "sweep": cfg.sweep,
        "seed": cfg.seed,
        "fps": cfg.fps,
        "retention_s": cfg.retention,
        "behind_margin_m": cfg.behind_margin,
        "oracle": {
            "min_disparity": cfg.oracle_min_disparity,
            "max_disparity": cfg.oracle_max_disparity,
            "uniqueness_ratio": cfg.oracle_uniqueness_ratio,
            "depth_crop_tolerance_m": cfg.depth_crop_tolerance,
        },
        "baseline_depth_range_m": list(cfg.baseline_depth_range),
    }


class PoseSource:
    """Pose log when the dataset has one, else constant-velocity dead
    reckoning from the configured velocity."""

    def __init__(self, cfg: RunConfig):
        log_path = cfg.dataset / "poses.csv"
        self.log = dataio.read_poses_csv(log_path) if log_path.exists() else None
        self.velocity = np.asarray(cfg.velocity, dtype=float)

    def at(self, t: float) -> Pose:
        if self.log is not None:
            return interpolate_pose(self.log, t)
        return integrate_constant_velocity(Pose(0.0), self.velocity, np.zeros(3), t)


class StageTimer:
    def __init__(self):
        self.totals: dict[str, float] = {}
        self.counts: dict[str, int] = {}

    def add(self, stage: str, seconds: float):
        self.totals[stage] = self.totals.get(stage, 0.0) + seconds
        self.counts[stage] = self.counts.get(stage, 0) + 1

    def summary_lines(self) -> list[str]:
        lines = []
        for stage, total in self.totals.items():
            n = self.counts[stage]
            mean_ms = 1000.0 * total / n
            line = f"stage={stage} total_s={total:.3f} mean_ms={mean_ms:.3f}"
            if stage == "detect":
                line += f" fps={n / total:.1f}" if total > 0 else " fps=inf"
            lines.append(line)
        return lines


def _load_frame(cfg: RunConfig, index: int) -> tuple[np.ndarray, np.ndarray]:
    try:
        left = dataio.read_pgm(dataio.frame_path(cfg.dataset, "left", index))
        right = dataio.read_pgm(dataio.frame_path(cfg.dataset, "right", index))
    except (OSError, ValueError) as e:
        raise CliError(f"frame {index}: {e}") from e
    if left.shape != right.shape:
        raise CliError(f"frame {index}: image sizes differ {left.shape} vs {right.shape}")
    return left, right


def _draw_overlay(
    left: np.ndarray,
    detections: list[Detection],
    remembered_px: list[tuple[int, int]],
    path: Path,
) -> None:
    h, w = left.shape
    rgb = np.repeat(left[:, :, None], 3, axis=2)
    for d in detections:  # current detections: blue box outlines
        y0, y1 = d.y, d.y + 4
        x0, x1 = d.x, d.x + 4
        rgb[y0, x0 : x1 + 1] = (0, 0, 255)
        rgb[y1, x0 : x1 + 1] = (0, 0, 255)
        rgb[y0 : y1 + 1, x0] = (0, 0, 255)
        rgb[y0 : y1 + 1, x1] = (0, 0, 255)
    for px, py in remembered_px:  # remembered points: red dots
        if 0 <= px < w and 0 <= py < h:
            rgb[max(0, py - 1) : py + 2, max(0, px - 1) : px + 2] = (255, 0, 0)
    dataio.write_png_rgb(path, rgb)


def cmd_detect(args) -> int:
    cfg = load_run_config(args)
    cfg.out.mkdir(parents=True, exist_ok=True)
    if cfg.overlays:
        (cfg.out / "overlays").mkdir(exist_ok=True)
    indices = dataio.list_frame_indices(cfg.dataset)
    poses = PoseSource(cfg)
    cloud = ObstacleCloud()
    all_world: list[np.ndarray] = []
    rows: list[str] = [dataio.DETECTIONS_HEADER]
    timer = StageTimer()
    n_detections = 0
    t_start = time.perf_counter()

    for index in indices:
        t0 = time.perf_counter()
        left, right = _load_frame(cfg, index)
        t1 = time.perf_counter()
        detections = process_frame(left, right, cfg.detector, cfg.calib, workers=cfg.workers)
        t2 = time.perf_counter()
        pose = poses.at(index / cfg.fps)
        if detections:
            world = transform_to_world(pose, np.array([d.point_camera for d in detections]))
        else:
            world = np.zeros((0, 3))
        if cfg.sweep:
            cloud.sweep_update(
                detections, pose, index, retention=cfg.retention, behind_margin=cfg.behind_margin
            )
        else:
            all_world.append(world)
        t3 = time.perf_counter()
        for det, pw in zip(detections, world):
            rows.append(dataio.format_detection_row(index, det, pw))
        n_detections += len(detections)
        timer.add("load", t1 - t0)
        timer.add("detect", t2 - t1)
        timer.add("sweep", t3 - t2)

        if cfg.overlays:
            remembered = []
            for pw in cloud.as_array() if cfg.sweep else world:
                uv = cfg.calib.reproject(transform_to_camera(pose, pw))
                if uv is not None:
                    remembered.append((int(round(uv[0])), int(round(uv[1]))))
            _draw_overlay(left, detections, remembered, cfg.out / "overlays" / f"{index:06d}.png")

    t4 = time.perf_counter()
    (cfg.out / "detections.csv").write_text("\n".join(rows) + "\n")
    cloud_points = cloud.as_array() if cfg.sweep else (
        np.concatenate(all_world) if all_world else np.zeros((0, 3))
    )
    dataio.write_ply(cfg.out / "cloud.ply", cloud_points)
    timer.add("write", time.perf_counter() - t4)

    elapsed = time.perf_counter() - t_start
    print(f"frames={len(indices)} elapsed_s={elapsed:.3f} pipeline_fps={len(indices) / elapsed:.1f}")
    for line in timer.summary_lines():
        print(line)
    print(f"detections={n_detections} cloud_points={cloud_points.shape[0]}")
    return 0


def cmd_benchmark(args) -> int:
    cfg = load_run_config(args)
    cfg.out.mkdir(parents=True, exist_ok=True)
    indices = dataio.list_frame_indices(cfg.dataset)
    poses = PoseSource(cfg)
    if cfg.oracle_max_disparity <= 0 or cfg.oracle_min_disparity < 0:
        raise CliError(
            f"invalid oracle disparity range "
            f"[{cfg.oracle_min_disparity}, {cfg.oracle_max_disparity}]"
        )
    target_depth = cfg.calib.depth_for(cfg.detector.disparity)

    cloud = ObstacleCloud()
    fp_frame = metrics.DistanceHistogram()
    fp_sweep = metrics.DistanceHistogram()
    fn_sweep = metrics.DistanceHistogram()
    per_frame = []
    oracle_world_frames: list[np.ndarray] = []
    pose_list: list[Pose] = []
    total_detections = 0
    frame_shape = None
    t_start = time.perf_counter()

    for index in indices:
        left, right = _load_frame(cfg, index)
        frame_shape = left.shape
        pose = poses.at(index / cfg.fps)
        pose_list.append(pose)

        detections = process_frame(left, right, cfg.detector, cfg.calib, workers=cfg.workers)
        total_detections += len(detections)
        det_world = (
            transform_to_world(pose, np.array([d.point_camera for d in detections]))
            if detections
            else np.zeros((0, 3))
        )
        if cfg.sweep:
            cloud.sweep_update(
                detections, pose, index, retention=cfg.retention, behind_margin=cfg.behind_margin
            )
        remembered = cloud.as_array() if cfg.sweep else det_world

        dmap = oracle.full_block_match(
            left,
            right,
            cfg.oracle_min_disparity,
            cfg.oracle_max_disparity,
            edge_threshold=cfg.detector.edge_threshold,
            uniqueness_ratio=cfg.oracle_uniqueness_ratio,
        )
        oracle_cam = oracle.all_matched_points(dmap, cfg.calib)
        oracle_world = transform_to_world(pose, oracle_cam) if oracle_cam.size else np.zeros((0, 3))
        oracle_world_frames.append(oracle_world)
        cropped_cam = oracle.depth_crop(dmap, cfg.calib, target_depth, cfg.depth_crop_tolerance)
        cropped_world = (
            transform_to_world(pose, cropped_cam) if cropped_cam.size else np.zeros((0, 3))
        )

        fp_frame.merge(metrics.false_positive_metric(det_world, cropped_world))
        fp_sweep.merge(metrics.false_positive_metric(remembered, oracle_world))
        fn_sweep.merge(metrics.false_negative_metric(oracle_world, remembered))
        per_frame.append(
            {
                "frame": index,
                "detections": len(detections),
                "remembered": int(remembered.shape[0]),
                "oracle_points": int(oracle_world.shape[0]),
                "oracle_depth_cropped": int(cropped_world.shape[0]),
            }
        )

    # Random emitter at the detector's average per-frame frequency, compared
    # frame by frame (no memory: it anchors the histograms, nothing more).
    n_rand = max(1, round(total_detections / max(1, len(indices))))
    fp_random = metrics.DistanceHistogram()
    fn_random = metrics.DistanceHistogram()
    for pos, (index, pose) in enumerate(zip(indices, pose_list)):
        pts_cam = metrics.random_baseline(
            n_rand,
            cfg.calib,
            frame_shape[1],
            frame_shape[0],
            cfg.baseline_depth_range,
            seed=(cfg.seed, index),
        )
        rand_world = transform_to_world(pose, pts_cam)
        oracle_world = oracle_world_frames[pos]
        fp_random.merge(metrics.false_positive_metric(rand_world, oracle_world))
        fn_random.merge(metrics.false_negative_metric(oracle_world, rand_world))

    elapsed = time.perf_counter() - t_start
    report = {
        "config": _config_echo(cfg),
        "frames": len(indices),
        "total_detections": total_detections,
        "random_points_per_frame": n_rand,
        "aggregate": {
            "fp_per_frame": fp_frame.to_dict(),
            "fp_sweep": fp_sweep.to_dict(),
            "fn_sweep": fn_sweep.to_dict(),
            "fp_random": fp_random.to_dict(),
            "fn_random": fn_random.to_dict(),
        },
        "per_frame": per_frame,
    }
    out_path = cfg.out / "metrics.json"
    out_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"frames={len(indices)} elapsed_s={elapsed:.3f} report={out_path}")
    for name in ("fp_per_frame", "fp_sweep", "fn_sweep", "fp_random", "fn_random"):
        h = report["aggregate"][name]
        fr = " ".join(f"{b}={f:.4f}" for b, f in zip(h["bins"], h["fractions"]))
        print(f"metric={name} total={sum(h['counts'])} {fr}")
    return 0


# --- synth --------------------------------------------------------------------


def parse_scene_file(path) -> dict:
    """Scene description: flat key=value plus repeatable `panel =` lines
    (cx cy cz width height seed [contrast] [texel_size] [period_x])."""
    out: dict = {"panels": []}
    with open(path) as f:
        for ln, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"{path}:{ln}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            if key == "panel":
                parts = val.replace(",", " ").split()
                if not 6 <= len(parts) <= 9:
                    raise CliError(
                        f"{path}:{ln}: panel needs 6-9 fields "
                        "(cx cy cz width height seed [contrast] [texel_size] [period_x]), "
                        f"got {len(parts)}"
                    )
                try:
                    panel = synth.Panel(
                        center=(float(parts[0]), float(parts[1]), float(parts[2])),
                        width=float(parts[3]),
                        height=float(parts[4]),
                        texture_seed=int(parts[5]),
                        contrast=int(parts[6]) if len(parts) > 6 else 90,
                        texel_size=float(parts[7]) if len(parts) > 7 else 0.03,
                        period_x=int(parts[8]) if len(parts) > 8 else 0,
                    )
                except ValueError as e:
                    raise CliError(f"{path}:{ln}: bad panel field: {e}") from e
                out["panels"].append(panel)
            else:
                out[key] = val
    return out


def _scene_from_description(desc: dict) -> synth.Scene:
    preset = desc.get("preset", "custom")
    if preset == "custom":
        if not desc["panels"]:
            raise CliError("scene file declares no panels and no preset")
        return synth.Scene(
            obstacles=tuple(desc["panels"]), background=int(desc.get("background", 128))
        )
    if preset == "single_plane":
        return synth.single_plane_scene(
            depth=float(desc.get("plane_depth", 4.8)), seed=int(desc.get("scene_seed", 1))
        )
    if preset == "corridor":
        return synth.corridor_scene(
            length=float(desc.get("corridor_length", 70.0)),
            spacing=float(desc.get("corridor_spacing", 1.2)),
            lateral=float(desc.get("corridor_lateral", 0.75)),
            panel_size=(
                float(desc.get("corridor_panel_width", 0.8)),
                float(desc.get("corridor_panel_height", 0.8)),
            ),
            z_start=float(desc.get("corridor_z_start", 4.8)),
            seed=int(desc.get("scene_seed", 5)),
        )
    if preset == "goalpost":
        return synth.goalpost_scene(seed=int(desc.get("scene_seed", 11)))
    raise CliError(f"unknown scene preset '{preset}'")


def cmd_synth(args) -> int:
    scene_path = Path(args.scene)
    if not scene_path.exists():
        raise CliError(f"scene file not found: {scene_path}")
    desc = parse_scene_file(scene_path)
    scene = _scene_from_description(desc)

    def get(key, cast, default):
        try:
            return cast(desc[key]) if key in desc else default
        except ValueError as e:
            raise CliError(f"{scene_path}: bad value for '{key}': {e}") from e

    width = get("width", int, synth.DEFAULT_WIDTH)
    height = get("height", int, synth.DEFAULT_HEIGHT)
    n_frames = get("n_frames", int, 1)
    fps = get("fps", float, 120.0)
    seed = args.seed if args.seed is not None else get("seed", int, 0)
    disparity = get("disparity_px", int, 20)
    calib = StereoCalibration(
        fx=get("fx", float, 320.0),
        fy=get("fy", float, 320.0),
        cx=get("cx", float, width / 2),
        cy=get("cy", float, height / 2),
        baseline=get("baseline_m", float, 0.3),
    )
    velocity = (0.0, 0.0, 9.0)
    if "velocity_mps" in desc:
        velocity = _parse_floats(desc["velocity_mps"], 3, "velocity_mps")
    pose_noise = get("pose_noise_std", float, 0.0)

    out = Path(args.out)
    (out / "left").mkdir(parents=True, exist_ok=True)
    (out / "right").mkdir(parents=True, exist_ok=True)
    (out / "ground_truth").mkdir(exist_ok=True)
    dataio.write_calib(out / "calib.txt", calib, disparity)

    logged_poses = []
    t0 = time.perf_counter()
    frames = synth.scripted_flight(
        scene,
        calib,
        velocity=velocity,
        fps=fps,
        n_frames=n_frames,
        seed=seed,
        width=width,
        height=height,
        pose_noise_std=pose_noise,
    )
    for fr in frames:
        dataio.write_pgm(dataio.frame_path(out, "left", fr.index), fr.left)
        dataio.write_pgm(dataio.frame_path(out, "right", fr.index), fr.right)
        np.savez_compressed(
            out / "ground_truth" / f"{fr.index:06d}.npz",
            block_disparity=fr.ground_truth.block_disparity.astype(np.float32),
        )
        logged_poses.append(fr.logged_pose)
    dataio.write_poses_csv(out / "poses.csv", logged_poses)
    elapsed = time.perf_counter() - t0
    print(f"frames={n_frames} elapsed_s={elapsed:.3f} dataset={out}")
    return 0


# --- entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pushbroom",
        description="Single-disparity stereo obstacle detection pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--dataset", required=True, help="dataset directory")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--workers", type=int, default=None, help="scan worker threads")
        p.add_argument("--overlays", action="store_true", help="write overlay PNGs")
        p.add_argument("--seed", type=int, default=None, help="random baseline seed")
        sweep = p.add_mutually_exclusive_group()
        sweep.add_argument("--sweep", dest="sweep", action="store_true", default=True)
        sweep.add_argument("--no-sweep", dest="sweep", action="store_false")
        p.add_argument(
            "--invariance-filter",
            choices=("on", "off"),
            default="on",
            help="horizontal self-similarity rejection",
        )

    p_detect = sub.add_parser("detect", help="run detection + sweep over a dataset")
    add_common(p_detect)
    p_detect.set_defaults(func=cmd_detect)

    p_bench = sub.add_parser("benchmark", help="detector vs block-matching reference")
    add_common(p_bench)
    p_bench.set_defaults(func=cmd_benchmark)

    p_synth = sub.add_parser("synth", help="render a synthetic dataset")
    p_synth.add_argument("--scene", required=True, help="scene description file")
    p_synth.add_argument("--out", required=True, help="dataset output directory")
    p_synth.add_argument("--seed", type=int, default=None, help="override scene seed")
    p_synth.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
