"""Pytest configuration and fixtures."""

import tempfile
from pathlib import Path

import numpy as np
import pytest

from voxmvs.core.api import EngineContext
from voxmvs.core.config import PipelineConfig
from voxmvs.stereo.geometry import CameraView
from voxmvs.synth.scene import RigSpec, ShapeSpec, SyntheticScene, generate_scene, save_scene


def make_view(view_id: int, proj: np.ndarray, size: int = 16, gray: int = 128) -> CameraView:
    """Camera view with a constant gray image."""
    image = np.full((size, size, 3), gray, dtype=np.uint8)
    return CameraView(id=view_id, image=image, proj=np.asarray(proj, dtype=np.float64))


@pytest.fixture
def temp_dir():
    """Create a temporary directory for tests."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def engine_context(temp_dir):
    """Create an EngineContext whose config and output live in a temporary directory."""
    context = EngineContext(config_dir=temp_dir / "config", base_output_dir=temp_dir / "output")

    yield context

    context.close_logging_handlers()


@pytest.fixture
def view_factory():
    """Factory for constant-gray camera views."""
    return make_view


@pytest.fixture
def rng():
    """Seeded random generator."""
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_scene() -> SyntheticScene:
    """A 4-view textured sphere at low resolution."""
    return generate_scene(ShapeSpec(), RigSpec(n_views=4, image_size=128), voxels_across=16)


@pytest.fixture(scope="session")
def small_scene_dir(small_scene, tmp_path_factory) -> Path:
    """The small scene saved to disk (scene.txt, cameras.txt, views, gt.occ)."""
    out_dir = tmp_path_factory.mktemp("small_scene")
    save_scene(small_scene, out_dir)
    return out_dir


@pytest.fixture
def small_config() -> PipelineConfig:
    """Pipeline configuration sized for the small scene."""
    return PipelineConfig(cube_size=8, stride=4, n_min=1)
