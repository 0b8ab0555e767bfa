import numpy as np
import pytest

from pushbroom.geometry import InvalidPoseError, Pose, quat_from_rotvec
from pushbroom.oracle import NO_MATCH, full_block_match
from pushbroom.synth import (
    Panel,
    Scene,
    corridor_scene,
    distance_to_surfaces,
    goalpost_scene,
    render_pair,
    scripted_flight,
    single_plane_scene,
    texel_values,
)


def test_plane_at_working_depth_is_exact_shift(calib, origin_pose):
    d = 20
    scene = single_plane_scene(depth=calib.fx * calib.baseline / d)
    left, right, gt = render_pair(scene, origin_pose, calib)
    mask = gt.surface_mask
    both = mask[:, d:] & mask[:, :-d]
    assert both.sum() > 5000
    np.testing.assert_array_equal(left[:, d:][both], right[:, :-d][both])


def test_empty_scene_is_uniform_background(calib, origin_pose):
    left, right, gt = render_pair(Scene(obstacles=()), origin_pose, calib)
    assert (left == 128).all()
    np.testing.assert_array_equal(left, right)
    assert not gt.surface_mask.any()
    assert np.isnan(gt.block_disparity).all()


def test_two_plane_occlusion_order(calib, origin_pose):
    near_z = calib.fx * calib.baseline / 20
    far_z = calib.fx * calib.baseline / 10
    scene = Scene(
        obstacles=(
            Panel(center=(0.0, 0.0, far_z), width=3.0, height=2.0, texture_seed=1),
            Panel(center=(0.0, 0.0, near_z), width=1.0, height=1.0, texture_seed=2),
        )
    )
    left, right, gt = render_pair(scene, origin_pose, calib)
    assert gt.depth[120, 188] == pytest.approx(near_z)
    # outside the near panel's footprint the far panel shows through
    assert gt.depth[120, 145] == pytest.approx(far_z)
    disparities = np.unique(gt.block_disparity[np.isfinite(gt.block_disparity)])
    np.testing.assert_allclose(sorted(disparities), [10.0, 20.0], atol=1e-9)


def test_block_disparity_only_on_uniform_blocks(calib, origin_pose):
    scene = single_plane_scene(depth=4.8)
    _, _, gt = render_pair(scene, origin_pose, calib)
    ys, xs = np.nonzero(np.isfinite(gt.block_disparity))
    for y, x in zip(ys[::50], xs[::50]):
        block = gt.depth[y : y + 5, x : x + 5]
        assert np.isfinite(block).all() and (block == block[0, 0]).all()


def test_ground_truth_backprojects_onto_surface(calib, origin_pose):
    scene = single_plane_scene(depth=4.8)
    _, _, gt = render_pair(scene, origin_pose, calib)
    ys, xs = np.nonzero(np.isfinite(gt.block_disparity))
    sel = slice(0, None, 97)
    pts = np.array(
        [
            calib.backproject(x + 2, y + 2, gt.block_disparity[y, x])
            for y, x in zip(ys[sel], xs[sel])
        ]
    )
    dist = distance_to_surfaces(scene, pts)
    assert dist.max() < 1e-3


def test_rendered_disparity_matches_pinhole(calib, origin_pose):
    for d in (10, 16, 20):
        scene = single_plane_scene(depth=calib.fx * calib.baseline / d)
        _, _, gt = render_pair(scene, origin_pose, calib)
        vals = gt.block_disparity[np.isfinite(gt.block_disparity)]
        assert vals.size
        np.testing.assert_allclose(vals, d, atol=1e-6)


def test_render_rejects_rotated_pose(calib):
    pose = Pose(0.0, np.zeros(3), quat_from_rotvec([0, 0.2, 0]))
    with pytest.raises(InvalidPoseError):
        render_pair(single_plane_scene(), pose, calib)


def test_camera_inside_obstacle_rejected(calib):
    scene = single_plane_scene(depth=0.0)
    with pytest.raises(InvalidPoseError):
        render_pair(scene, Pose(0.0), calib)


def test_texel_values_deterministic_and_in_range():
    tx = np.arange(-10, 10)[None, :]
    ty = np.arange(-5, 15)[:, None]
    a = texel_values(7, tx, ty, 90)
    b = texel_values(7, tx, ty, 90)
    np.testing.assert_array_equal(a, b)
    assert a.min() >= 38 and a.max() <= 218
    assert not (a == texel_values(8, tx, ty, 90)).all()


def test_texel_periodicity():
    tx = np.arange(0, 12)[None, :]
    ty = np.zeros((1, 1), dtype=np.int64)
    v = texel_values(3, tx, ty, 80, period_x=4)
    np.testing.assert_array_equal(v[0, :4], v[0, 4:8])
    np.testing.assert_array_equal(v[0, :4], v[0, 8:12])


def test_scripted_flight_single_frame(calib):
    frames = list(scripted_flight(single_plane_scene(), calib, n_frames=1))
    assert len(frames) == 1
    assert frames[0].pose.t == 0.0
    assert frames[0].left.shape == (240, 376)


def test_scripted_flight_kinematics(calib):
    # 120 fps at 9 m/s: frame 67 sits 67 * 9/120 = 5.025 m down-range
    frames = scripted_flight(
        single_plane_scene(depth=50.0), calib, velocity=(0, 0, 9.0), fps=120, n_frames=68
    )
    last = None
    for fr in frames:
        last = fr
    assert last.index == 67
    assert last.pose.position[2] == pytest.approx(67 * 9 / 120, abs=1e-12)
    assert last.pose.position[2] == pytest.approx(5.025, abs=1e-12)


def test_scripted_flight_deterministic(calib):
    scene = corridor_scene(length=6.0)
    a = list(scripted_flight(scene, calib, n_frames=4, seed=3, pose_noise_std=0.01))
    b = list(scripted_flight(scene, calib, n_frames=4, seed=3, pose_noise_std=0.01))
    for fa, fb in zip(a, b):
        np.testing.assert_array_equal(fa.left, fb.left)
        np.testing.assert_array_equal(fa.right, fb.right)
        np.testing.assert_array_equal(fa.logged_pose.position, fb.logged_pose.position)


def test_pose_noise_affects_log_not_render(calib):
    scene = single_plane_scene()
    clean = list(scripted_flight(scene, calib, n_frames=2, seed=1, pose_noise_std=0.0))
    noisy = list(scripted_flight(scene, calib, n_frames=2, seed=1, pose_noise_std=0.05))
    np.testing.assert_array_equal(clean[1].left, noisy[1].left)
    assert not np.array_equal(clean[1].logged_pose.position, noisy[1].logged_pose.position)
    np.testing.assert_array_equal(noisy[1].pose.position, clean[1].pose.position)


def test_oracle_recovers_ground_truth_on_renders(calib, origin_pose):
    """Renderer and exhaustive matcher validate each other: >=99% of
    textured ground-truth blocks within +/-1 px."""
    scene = Scene(
        obstacles=(
            Panel(center=(-0.7, 0.0, 9.6), width=1.4, height=1.2, texture_seed=21),
            Panel(center=(0.8, 0.2, 6.0), width=1.2, height=1.2, texture_seed=22),
            Panel(center=(0.0, -0.5, 4.0), width=1.0, height=0.8, texture_seed=23),
        )
    )
    left, right, gt = render_pair(scene, origin_pose, calib)
    dm = full_block_match(left, right, 5, 40, edge_threshold=100)
    ys, xs = np.nonzero(np.isfinite(gt.block_disparity))
    hits = total = 0
    el_ok = dm.values != NO_MATCH
    for y, x in zip(ys, xs):
        if x < 40 or not el_ok[y, x]:
            continue
        total += 1
        hits += abs(dm.values[y, x] - gt.block_disparity[y, x]) <= 1.0
    assert total > 1000
    assert hits / total >= 0.99


def test_corridor_scene_geometry():
    scene = corridor_scene(length=12.0, spacing=1.2, lateral=0.75)
    zs = [p.center[2] for p in scene.obstacles]
    assert zs == sorted(zs)
    assert len(scene.obstacles) == 11
    sides = [np.sign(p.center[0]) for p in scene.obstacles]
    assert sides[0] != sides[1]


def test_goalpost_scene_has_periodic_crossbar():
    scene = goalpost_scene()
    periodic = [p for p in scene.obstacles if p.period_x > 0]
    assert len(periodic) == 1
    assert len(scene.obstacles) == 3
