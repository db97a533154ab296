"""Tests for pair sample collection on synthetic scenes."""

import numpy as np
import pytest

from voxmvs.core.config import PipelineConfig
from voxmvs.core.exceptions import EmptyInputError, InvalidConfigError
from voxmvs.core.training import SIMILAR_IOU, collect_from_dirs, collect_pair_samples, iou
from voxmvs.scene_io import OccGrid, write_occgrid
from voxmvs.synth.scene import GROUND_TRUTH_NAME, save_scene


@pytest.fixture(scope="module")
def samples(small_scene_dir):
    """Pair samples of the shared small scene."""
    return collect_pair_samples(small_scene_dir, PipelineConfig(cube_size=8, stride=4, n_min=1))


def test_iou_examples():
    """Test intersection over union on small masks."""
    a = np.array([True, True, False, False])
    b = np.array([True, False, True, False])
    assert iou(a, b) == pytest.approx(1 / 3)
    assert iou(a, a) == 1.0
    assert iou(np.zeros(4, dtype=bool), np.zeros(4, dtype=bool)) == 0.0


def test_samples_are_labeled(samples):
    """Test the labels and features of the collected samples."""
    assert samples
    for sample in samples:
        i, j = sample.pair
        assert i < j
        assert 0.0 <= sample.quality <= 1.0
        assert sample.d >= 0.0
        assert 0.0 < sample.theta <= np.pi
        assert sample.e_i.shape == sample.e_j.shape == (128,)
        if sample.similar:
            assert sample.quality >= SIMILAR_IOU


def test_samples_follow_lattice_order(samples):
    """Test that samples come in cube order, pairs sorted within a cube."""
    keys = [(s.cube_index, s.pair) for s in samples]
    assert keys == sorted(keys)


def test_sample_views(samples):
    """Test the weight and gate views of a sample."""
    sample = samples[0]
    weight = sample.weight_sample()
    assert (weight.theta, weight.d, weight.quality) == (sample.theta, sample.d, sample.quality)
    assert sample.gate_sample() == (sample.d, sample.similar)


def test_collect_from_parent_directory(temp_dir, small_scene, small_config):
    """Test that a directory of scenes is scanned one level deep."""
    save_scene(small_scene, temp_dir / "scenes" / "a")
    (temp_dir / "scenes" / "notes").mkdir()

    from_parent = collect_from_dirs([temp_dir / "scenes"], small_config)
    direct = collect_pair_samples(temp_dir / "scenes" / "a", small_config)

    assert [s.quality for s in from_parent] == [s.quality for s in direct]


def test_collect_without_scenes(temp_dir, small_config):
    """Test that an empty directory is an error."""
    with pytest.raises(EmptyInputError):
        collect_from_dirs([temp_dir], small_config)


def test_misaligned_ground_truth(temp_dir, small_scene, small_config):
    """Test that ground truth must sit on the scene lattice."""
    scene_dir = temp_dir / "scene"
    save_scene(small_scene, scene_dir)
    gt = small_scene.gt_occ
    assert gt.origin is not None
    shifted = (gt.origin[0] + 0.3, gt.origin[1], gt.origin[2])
    write_occgrid(
        scene_dir / GROUND_TRUTH_NAME,
        OccGrid(occ=gt.occ, origin=shifted, voxel_size=gt.voxel_size),
    )
    with pytest.raises(InvalidConfigError):
        collect_pair_samples(scene_dir, small_config)
