"""Tests for colored voxel cubes."""

import numpy as np
import pytest

from voxmvs.stereo.cvc import CvcVolume, bilinear_sample, build_cvc, cvc_gray
from voxmvs.stereo.geometry import CameraView, Cube

IDENTITY = np.hstack([np.eye(3), np.zeros((3, 1))])


def _pinhole(focal: float, size: int) -> np.ndarray:
    """Camera at the origin looking down +z, principal point at the image center."""
    c = (size - 1) / 2.0
    return np.array([[focal, 0.0, c, 0.0], [0.0, focal, c, 0.0], [0.0, 0.0, 1.0, 0.0]])


def test_constant_image_gives_constant_colors(view_factory):
    """Test that a constant gray image gives that gray at every valid voxel."""
    view = view_factory(0, _pinhole(8.0, 16), size=16, gray=128)
    cube = Cube(index=(0, 0, 0), origin=(-0.5, -0.5, 2.0), voxel_size=0.25, s=4)

    cvc = build_cvc(cube, view)

    assert cvc.s == 4
    assert cvc.valid.all()
    np.testing.assert_allclose(cvc.colors, 128 / 255)


def test_cube_behind_camera(view_factory):
    """Test that a cube behind the camera is entirely invalid and black."""
    view = view_factory(0, _pinhole(8.0, 16))
    cube = Cube(index=(0, 0, 0), origin=(-0.5, -0.5, -3.0), voxel_size=0.25, s=4)

    cvc = build_cvc(cube, view)

    assert not cvc.valid.any()
    assert not cvc.colors.any()


def test_partially_visible_cube(view_factory):
    """Test that voxels projecting outside the frame are invalid."""
    view = view_factory(0, _pinhole(8.0, 16))
    cube = Cube(index=(0, 0, 0), origin=(0.0, -0.5, 1.0), voxel_size=0.5, s=4)

    cvc = build_cvc(cube, view)

    assert cvc.valid.any()
    assert not cvc.valid.all()
    assert not cvc.colors[~cvc.valid].any()


def test_checkerboard_bilinear():
    """Test CVC colors on a 2x2 checkerboard against hand bilinear interpolation."""
    image = np.zeros((2, 2, 3), dtype=np.uint8)
    image[0, 1] = 255
    image[1, 0] = 255
    view = CameraView(id=0, image=image, proj=IDENTITY)
    cube = Cube(index=(0, 0, 0), origin=(0.0, 0.0, 1.0), voxel_size=0.5, s=2)

    cvc = build_cvc(cube, view)

    assert cvc.valid.all()
    for i in range(2):
        for j in range(2):
            for k in range(2):
                x, y, z = cube.voxel_center(i, j, k)
                fx, fy = x / z, y / z
                expected = fx * (1 - fy) + (1 - fx) * fy
                np.testing.assert_allclose(cvc.colors[i, j, k], [expected] * 3, atol=1e-12)


def test_bilinear_edge_clamp():
    """Test sampling exactly on the last row and column."""
    image = np.zeros((3, 3, 3), dtype=np.uint8)
    image[2, 2] = 255
    colors = bilinear_sample(image, np.array([[2.0, 2.0], [1.5, 2.0], [0.0, 0.0]]))
    np.testing.assert_allclose(colors[:, 0], [1.0, 0.5, 0.0])


def _single_voxel(color) -> CvcVolume:
    colors = np.zeros((2, 2, 2, 3))
    colors[0, 0, 0] = color
    valid = np.zeros((2, 2, 2), dtype=bool)
    valid[0, 0, 0] = True
    return CvcVolume(cube_index=(0, 0, 0), view_id=0, colors=colors, valid=valid)


def test_gray_white_and_green():
    """Test luminance of pure white and pure green."""
    assert cvc_gray(_single_voxel([1.0, 1.0, 1.0]))[0, 0, 0] == pytest.approx(1.0)
    assert cvc_gray(_single_voxel([0.0, 1.0, 0.0]))[0, 0, 0] == pytest.approx(0.587)


def test_gray_matches_scalar_formula(rng):
    """Test luminance against a per-voxel scalar computation."""
    colors = rng.uniform(size=(3, 3, 3, 3))
    valid = rng.uniform(size=(3, 3, 3)) > 0.3
    cvc = CvcVolume(cube_index=(0, 0, 0), view_id=0, colors=colors, valid=valid)

    gray = cvc_gray(cvc)

    for idx in np.ndindex(3, 3, 3):
        r, g, b = colors[idx]
        expected = 0.299 * r + 0.587 * g + 0.114 * b if valid[idx] else 0.0
        assert gray[idx] == pytest.approx(expected, abs=1e-12)
    assert gray.min() >= 0.0
    assert gray.max() <= 1.0


def test_translating_camera_and_cube_together(rng):
    """Test that moving the camera and the cube by the same offset keeps the CVC."""
    image = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
    proj = _pinhole(8.0, 16)
    cube = Cube(index=(2, 0, 1), origin=(-0.5, -0.5, 2.0), voxel_size=0.25, s=4)
    base = build_cvc(cube, CameraView(id=0, image=image, proj=proj))

    for _ in range(10):
        offset = rng.uniform(-3.0, 3.0, size=3)
        shift = np.eye(4)
        shift[:3, 3] = -offset
        moved_view = CameraView(id=0, image=image, proj=proj @ shift)
        moved_cube = Cube(
            index=cube.index,
            origin=tuple(float(c) for c in np.asarray(cube.origin) + offset),
            voxel_size=cube.voxel_size,
            s=cube.s,
        )

        moved = build_cvc(moved_cube, moved_view)

        np.testing.assert_array_equal(moved.valid, base.valid)
        np.testing.assert_allclose(moved.colors, base.colors, atol=1e-9)
