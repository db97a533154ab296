"""Tests for pipeline configuration loading and validation."""

from pathlib import Path

import pytest

from voxmvs.core.config import PipelineConfig, PredictorSpec, load_pipeline_config
from voxmvs.core.exceptions import InvalidConfigError

REPO_CONFIG = Path(__file__).resolve().parents[1] / "config" / "pipeline.toml"


def test_defaults():
    """Test the documented default values."""
    config = PipelineConfig()
    assert (config.cube_size, config.stride) == (32, 16)
    assert (config.n_v, config.n_min) == (5, 3)
    assert (config.gamma, config.tau, config.beta) == (0.8, 0.7, 6.0)
    assert config.weight_mode == "heuristic"
    assert config.voxel_size is None
    assert not config.adaptive


def test_shipped_toml_matches_defaults():
    """Test that config/pipeline.toml spells out the defaults."""
    assert load_pipeline_config(REPO_CONFIG) == PipelineConfig()


def test_text_round_trip():
    """Test that to_text output parses back to an equal configuration."""
    config = PipelineConfig(
        cube_size=16, stride=8, voxel_size=0.025, adaptive=True, thinning=True, tau=0.65
    )
    assert PipelineConfig.from_text(config.to_text()) == config


def test_text_comments_and_blank_lines():
    """Test that comments and blank lines are ignored."""
    config = PipelineConfig.from_text("# lattice\n\ncube_size = 16\nstride=8\n")
    assert (config.cube_size, config.stride) == (16, 8)


def test_load_key_value_file(temp_dir):
    """Test loading a key=value file."""
    path = temp_dir / "run.cfg"
    path.write_text("n_v=3\nweight_mode=uniform\n", encoding="utf-8")
    config = load_pipeline_config(path)
    assert config.n_v == 3
    assert config.weight_mode == "uniform"


def test_load_toml_file(temp_dir):
    """Test loading the [pipeline] section of a TOML file."""
    path = temp_dir / "run.toml"
    path.write_text("[pipeline]\ngamma = 0.6\nadaptive = true\n", encoding="utf-8")
    config = load_pipeline_config(path)
    assert config.gamma == 0.6
    assert config.adaptive


def test_load_none_gives_defaults():
    """Test that no path means defaults."""
    assert load_pipeline_config(None) == PipelineConfig()


@pytest.mark.parametrize(
    "text",
    [
        "cube_sise=16\n",
        "gamma=1.5\n",
        "tau=1.0\n",
        "stride=40\n",
        "n_v=0\n",
        "window=4\n",
        "weight_mode=net\n",
        "tau_min=0.9\ntau_max=0.8\n",
        "cube_size\n",
        "n_v=3\nn_v=4\n",
    ],
)
def test_invalid_text(text):
    """Test that unknown keys and invalid values are rejected."""
    with pytest.raises(InvalidConfigError):
        PipelineConfig.from_text(text)


def test_invalid_toml(temp_dir):
    """Test that malformed TOML is a configuration error."""
    path = temp_dir / "bad.toml"
    path.write_text("[pipeline\n", encoding="utf-8")
    with pytest.raises(InvalidConfigError):
        load_pipeline_config(path)


def test_candidate_grid():
    """Test the adaptive threshold grid."""
    grid = PipelineConfig(tau_candidates=5, tau_min=0.5, tau_max=0.9).candidate_grid()
    assert grid == pytest.approx([0.5, 0.6, 0.7, 0.8, 0.9])
    assert PipelineConfig(tau_candidates=1).candidate_grid() == [0.5]


def test_predictor_spec():
    """Test the predictor part of the configuration."""
    spec = PipelineConfig(window=5, sharpness=1.0).predictor_spec()
    assert spec == PredictorSpec(kind="zncc", window=5, sharpness=1.0)


def test_config_is_frozen():
    """Test that configurations are immutable."""
    config = PipelineConfig()
    with pytest.raises(ValueError):
        config.tau = 0.5  # type: ignore[misc]
    assert config.model_copy(update={"thread_count": 4}).thread_count == 4


def test_engine_context_loads_pipeline_toml(engine_context):
    """Test that the context falls back to config/pipeline.toml."""
    engine_context.config_dir.mkdir(parents=True, exist_ok=True)
    (engine_context.config_dir / "pipeline.toml").write_text(
        "[pipeline]\nn_min = 2\n", encoding="utf-8"
    )
    assert engine_context.load_config().n_min == 2
    assert engine_context.load_config(REPO_CONFIG) == PipelineConfig()
