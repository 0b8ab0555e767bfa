import numpy as np
import pytest

from pushbroom import Pose, PushbroomConfig, default_calibration


@pytest.fixture
def calib():
    return default_calibration()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def random_image(rng):
    return rng.integers(0, 256, (240, 376), dtype=np.uint8)


def make_shifted_pair(rng, shift, h=60, w=120):
    """Right image = left shifted right-to-left by `shift` px, with the
    exposed right border filled by fresh noise."""
    left = rng.integers(0, 256, (h, w), dtype=np.uint8)
    right = np.empty_like(left)
    right[:, : w - shift] = left[:, shift:]
    right[:, w - shift :] = rng.integers(0, 256, (h, shift), dtype=np.uint8)
    return left, right


@pytest.fixture
def tuned_cfg():
    """Detector config tuned for the synthetic texture family (see README:
    thresholds are per-dataset tuning parameters)."""
    return PushbroomConfig(disparity=20, edge_threshold=100, score_threshold=0.02)


@pytest.fixture
def origin_pose():
    return Pose(0.0)
