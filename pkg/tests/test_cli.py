import json

import numpy as np
import pytest

from pushbroom import dataio
from pushbroom.cli import main

SCENE_ONE_PLANE = """
preset = single_plane
plane_depth = 4.8
n_frames = 3
fps = 120
velocity_mps = 0, 0, 9
seed = 4
"""

CONFIG_TUNED = """
# thresholds tuned for the synthetic texture family
score_threshold = 0.02
edge_threshold = 100
retention_s = 3.0
"""


@pytest.fixture
def plane_dataset(tmp_path):
    scene = tmp_path / "scene.txt"
    scene.write_text(SCENE_ONE_PLANE)
    out = tmp_path / "ds"
    assert main(["synth", "--scene", str(scene), "--out", str(out)]) == 0
    return out


@pytest.fixture
def tuned_config(tmp_path):
    cfg = tmp_path / "tuned.cfg"
    cfg.write_text(CONFIG_TUNED)
    return cfg


def test_synth_writes_canonical_layout(plane_dataset):
    assert (plane_dataset / "calib.txt").exists()
    assert (plane_dataset / "poses.csv").exists()
    assert dataio.list_frame_indices(plane_dataset) == [0, 1, 2]
    assert sorted(p.name for p in (plane_dataset / "ground_truth").iterdir()) == [
        "000000.npz",
        "000001.npz",
        "000002.npz",
    ]
    gt = np.load(plane_dataset / "ground_truth" / "000000.npz")
    assert gt["block_disparity"].shape == (236, 372)


def test_synth_deterministic(tmp_path):
    scene = tmp_path / "scene.txt"
    scene.write_text(SCENE_ONE_PLANE)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["synth", "--scene", str(scene), "--out", str(a)]) == 0
    assert main(["synth", "--scene", str(scene), "--out", str(b)]) == 0
    for rel in ("left/000001.pgm", "right/000002.pgm", "poses.csv", "calib.txt"):
        assert (a / rel).read_bytes() == (b / rel).read_bytes()


def test_synth_bad_scene_file_reports_line(tmp_path, capsys):
    scene = tmp_path / "scene.txt"
    scene.write_text("preset = custom\npanel = 1 2\n")
    rc = main(["synth", "--scene", str(scene), "--out", str(tmp_path / "o")])
    assert rc == 2
    err = capsys.readouterr().err
    assert err.startswith("error:")
    assert ":2:" in err and "panel" in err


def test_synth_custom_panels(tmp_path):
    scene = tmp_path / "scene.txt"
    scene.write_text("preset = custom\nn_frames = 1\npanel = 0 0 4.8 1.0 1.0 3\n")
    out = tmp_path / "o"
    assert main(["synth", "--scene", str(scene), "--out", str(out)]) == 0
    img = dataio.read_pgm(out / "left" / "000000.pgm")
    assert (img != 128).any()


def test_detect_end_to_end(plane_dataset, tuned_config, tmp_path, capsys):
    out = tmp_path / "run"
    rc = main(
        [
            "detect",
            "--dataset",
            str(plane_dataset),
            "--out",
            str(out),
            "--config",
            str(tuned_config),
            "--workers",
            "2",
        ]
    )
    assert rc == 0
    stdout = capsys.readouterr().out
    assert "stage=detect" in stdout and "pipeline_fps=" in stdout
    csv = (out / "detections.csv").read_text().splitlines()
    assert csv[0] == dataio.DETECTIONS_HEADER
    assert len(csv) > 10
    first = csv[1].split(",")
    assert first[0] == "0"
    assert float(first[7]) == pytest.approx(4.8)  # Zc: single working depth
    ply = (out / "cloud.ply").read_text()
    assert "element vertex" in ply


def test_detect_determinism_across_workers(plane_dataset, tuned_config, tmp_path):
    outs = {}
    for workers in (1, 2, 8):
        out = tmp_path / f"w{workers}"
        rc = main(
            [
                "detect",
                "--dataset",
                str(plane_dataset),
                "--out",
                str(out),
                "--config",
                str(tuned_config),
                "--workers",
                str(workers),
            ]
        )
        assert rc == 0
        outs[workers] = (out / "detections.csv").read_bytes()
    assert outs[1] == outs[2] == outs[8]


def test_overlays_do_not_change_csv(plane_dataset, tuned_config, tmp_path):
    plain, with_overlays = tmp_path / "p", tmp_path / "q"
    main(
        ["detect", "--dataset", str(plane_dataset), "--out", str(plain),
         "--config", str(tuned_config)]
    )
    main(
        ["detect", "--dataset", str(plane_dataset), "--out", str(with_overlays),
         "--config", str(tuned_config), "--overlays"]
    )
    assert (plain / "detections.csv").read_bytes() == (with_overlays / "detections.csv").read_bytes()
    assert (plain / "cloud.ply").read_bytes() == (with_overlays / "cloud.ply").read_bytes()
    pngs = list((with_overlays / "overlays").glob("*.png"))
    assert len(pngs) == 3
    assert pngs[0].read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_detect_missing_dataset_errors(tmp_path, capsys):
    rc = main(["detect", "--dataset", str(tmp_path / "nope"), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert capsys.readouterr().err.startswith("error:")


def test_detect_empty_dataset_errors(tmp_path, capsys):
    ds = tmp_path / "ds"
    (ds / "left").mkdir(parents=True)
    (ds / "right").mkdir()
    rc = main(["detect", "--dataset", str(ds), "--out", str(tmp_path / "o")])
    assert rc == 2
    err = capsys.readouterr().err
    assert err.startswith("error:")
    assert not (tmp_path / "o").exists()


def test_detect_unreadable_frame_aborts_with_index(plane_dataset, tmp_path, capsys):
    (plane_dataset / "left" / "000001.pgm").write_bytes(b"P5\n4 4\n255\n")
    rc = main(["detect", "--dataset", str(plane_dataset), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "frame 1" in capsys.readouterr().err


def test_benchmark_writes_report(tmp_path, capsys):
    scene = tmp_path / "scene.txt"
    scene.write_text(
        "preset = custom\nn_frames = 3\nvelocity_mps = 0 0 0\n"
        "panel = 0 0 4.8 0.5 0.4 6\n"
    )
    ds = tmp_path / "small"
    assert main(["synth", "--scene", str(scene), "--out", str(ds)]) == 0
    out = tmp_path / "bench"
    cfg = tmp_path / "bench.cfg"
    cfg.write_text(CONFIG_TUNED + "oracle_min_disparity = 15\noracle_max_disparity = 30\n")
    rc = main(
        [
            "benchmark",
            "--dataset",
            str(ds),
            "--out",
            str(out),
            "--config",
            str(cfg),
            "--seed",
            "9",
        ]
    )
    assert rc == 0
    report = json.loads((out / "metrics.json").read_text())
    agg = report["aggregate"]
    assert set(agg) == {"fp_per_frame", "fp_sweep", "fn_sweep", "fp_random", "fn_random"}
    # static plane exactly at the working depth: detector and oracle coincide
    fp = agg["fp_sweep"]
    assert fp["counts"][0] > 0
    assert fp["fractions"][0] > 0.99
    fn = agg["fn_sweep"]
    assert fn["fractions"][0] + fn["fractions"][1] > 0.99
    # random baseline must be far worse in the close bins
    assert agg["fp_random"]["fractions"][0] < fp["fractions"][0]
    assert report["config"]["detector"]["score_threshold"] == 0.02
    assert report["frames"] == 3


def test_benchmark_identical_sets_contrived(tmp_path, capsys):
    """Contrived fixture: detector output and oracle coincide exactly ->
    both histograms 100% in the first bin (checked via the plane dataset
    above); here check the no-detections degenerate path stays sane."""
    scene = tmp_path / "scene.txt"
    scene.write_text("preset = custom\nn_frames = 2\npanel = 0 0 30.0 2 2 3\n")
    ds = tmp_path / "ds"
    assert main(["synth", "--scene", str(scene), "--out", str(ds)]) == 0
    out = tmp_path / "bench"
    rc = main(["benchmark", "--dataset", str(ds), "--out", str(out)])
    assert rc == 0
    report = json.loads((out / "metrics.json").read_text())
    assert report["total_detections"] == 0
    assert report["aggregate"]["fp_sweep"]["counts"] == [0, 0, 0, 0, 0, 0]


def test_invariance_filter_flag_off(plane_dataset, tuned_config, tmp_path):
    out = tmp_path / "nofilter"
    rc = main(
        [
            "detect", "--dataset", str(plane_dataset), "--out", str(out),
            "--config", str(tuned_config), "--invariance-filter", "off",
        ]
    )
    assert rc == 0
    assert (out / "detections.csv").exists()
