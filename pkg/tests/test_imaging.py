import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pushbroom.imaging import (
    BLOCK,
    LAPLACIAN_KERNEL,
    block_edge_sum,
    block_sad,
    box_sum,
    laplacian,
    sad_map,
)

from conftest import make_shifted_pair


def brute_laplacian(img):
    """Independent oracle: direct hand convolution with python loops."""
    h, w = img.shape
    out = np.zeros((h, w), dtype=np.int64)
    for y in range(1, h - 1):
        for x in range(1, w - 1):
            acc = 0
            for ky in range(3):
                for kx in range(3):
                    acc += int(LAPLACIAN_KERNEL[ky, kx]) * int(img[y + ky - 1, x + kx - 1])
            out[y, x] = abs(acc)
    return out


def test_constant_image_has_zero_edges():
    img = np.full((20, 30), 128, dtype=np.uint8)
    assert (laplacian(img) == 0).all()


def test_impulse_response():
    img = np.zeros((5, 5), dtype=np.uint8)
    img[2, 2] = 255
    edges = laplacian(img)
    assert edges[2, 2] == 2040
    for y, x in ((1, 1), (1, 3), (3, 1), (3, 3)):
        assert edges[y, x] == 510
    assert edges.sum() == 2040 + 4 * 510
    np.testing.assert_array_equal(edges, brute_laplacian(img))


def test_random_image_shape_and_sign(random_image):
    edges = laplacian(random_image)
    assert edges.shape == (240, 376)
    assert (edges >= 0).all()
    assert (edges[0, :] == 0).all() and (edges[-1, :] == 0).all()
    assert (edges[:, 0] == 0).all() and (edges[:, -1] == 0).all()


def test_laplacian_matches_brute_force(rng):
    img = rng.integers(0, 256, (12, 17), dtype=np.uint8)
    np.testing.assert_array_equal(laplacian(img), brute_laplacian(img))


def test_laplacian_offset_invariance(rng):
    img = rng.integers(60, 180, (16, 16), dtype=np.uint8)
    shifted = (img + 40).astype(np.uint8)  # no saturation by construction
    np.testing.assert_array_equal(laplacian(img), laplacian(shifted))


def test_laplacian_rejects_tiny_image():
    with pytest.raises(ValueError):
        laplacian(np.zeros((4, 10), dtype=np.uint8))
    with pytest.raises(ValueError):
        laplacian(np.zeros((10, 10), dtype=np.float64))


def test_block_edge_sum_trivial_cases():
    zeros = np.zeros((8, 8), dtype=np.int16)
    assert block_edge_sum(zeros, 0, 0) == 0
    ones = np.ones((8, 8), dtype=np.int16)
    assert block_edge_sum(ones, 2, 1) == 25


def test_block_edge_sum_on_impulse_map():
    img = np.zeros((5, 5), dtype=np.uint8)
    img[2, 2] = 255
    edges = laplacian(img)
    assert block_edge_sum(edges, 0, 0) == 4080


def test_block_edge_sum_bounds():
    edges = np.zeros((10, 10), dtype=np.int16)
    with pytest.raises(ValueError):
        block_edge_sum(edges, 6, 0)
    with pytest.raises(ValueError):
        block_edge_sum(edges, 0, -1)


def test_block_sad_identity(random_image):
    assert block_sad(random_image, random_image, 37, 12, 0) == 0


def test_block_sad_maximal_difference():
    left = np.full((6, 6), 255, dtype=np.uint8)
    right = np.zeros((6, 6), dtype=np.uint8)
    assert block_sad(left, right, 0, 0, 0) == 25 * 255


def test_block_sad_shifted_pair_everywhere(rng):
    shift = 7
    left, right = make_shifted_pair(rng, shift, h=20, w=50)
    for y in range(0, 20 - BLOCK + 1):
        for x in range(shift, 50 - shift - BLOCK + 1):
            assert block_sad(left, right, x, y, shift) == 0


def test_block_sad_bounds_and_negative_disparity(random_image):
    with pytest.raises(ValueError):
        block_sad(random_image, random_image, 3, 0, 5)  # shifted block off left edge
    with pytest.raises(ValueError):
        block_sad(random_image, random_image, 10, 0, -1)


def test_block_sad_mirror_symmetry(rng):
    left = rng.integers(0, 256, (12, 40), dtype=np.uint8)
    right = rng.integers(0, 256, (12, 40), dtype=np.uint8)
    fl, fr = left[:, ::-1].copy(), right[:, ::-1].copy()
    d = 6
    for x, y in ((8, 2), (20, 5), (34, 0)):
        # mirroring both images swaps the roles of the two blocks
        mirrored_x = 40 - BLOCK - (x - d)
        assert block_sad(left, right, x, y, d) == block_sad(fr, fl, mirrored_x, y, d)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_block_sad_zero_iff_equal(seed):
    rng = np.random.default_rng(seed)
    left = rng.integers(0, 256, (9, 14), dtype=np.uint8)
    right = left.copy()
    x, y, d = 6, 2, int(rng.integers(0, 3))
    equal = (left[y : y + 5, x : x + 5] == right[y - 0 : y + 5, x - d : x - d + 5]).all()
    sad = block_sad(left, right, x, y, d)
    assert (sad == 0) == equal


def test_box_sum_matches_per_block_sums(rng):
    a = rng.integers(0, 2041, (17, 23)).astype(np.int16)
    sums = box_sum(a)
    assert sums.shape == (13, 19)
    for y in range(13):
        for x in range(19):
            assert sums[y, x] == a[y : y + 5, x : x + 5].sum()


def test_sad_map_matches_block_sad(rng):
    left = rng.integers(0, 256, (11, 30), dtype=np.uint8)
    right = rng.integers(0, 256, (11, 30), dtype=np.uint8)
    d = 4
    m = sad_map(left, right, d)
    assert m.shape == (7, 30 - 4 - d)
    for y in range(7):
        for j in range(m.shape[1]):
            assert m[y, j] == block_sad(left, right, d + j, y, d)


def test_determinism_across_runs(random_image):
    a = laplacian(random_image)
    b = laplacian(random_image.copy())
    np.testing.assert_array_equal(a, b)
