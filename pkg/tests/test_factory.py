"""Tests for the configured pair scorer and cube gate."""

import numpy as np
import pytest

from voxmvs.core.config import PipelineConfig
from voxmvs.core.exceptions import InvalidConfigError, ParseError
from voxmvs.core.factory import (
    HeuristicScorer,
    NetScorer,
    UniformScorer,
    build_gate,
    build_pair_scorer,
)
from voxmvs.stereo.weighting import (
    DEFAULT_GATE,
    GateModel,
    WeightNet,
    heuristic_score,
    raw_score,
    save_gate,
    save_weightnet,
)

E = np.full(128, 1.0 / np.sqrt(128.0))


def test_heuristic_scorer():
    """Test that heuristic mode scores with the closed form."""
    scorer = build_pair_scorer(PipelineConfig())
    assert isinstance(scorer, HeuristicScorer)
    assert scorer.score(0.3, 0.5, E, E) == heuristic_score(0.3, 0.5)


def test_uniform_scorer():
    """Test that uniform mode gives every pair the same score."""
    scorer = build_pair_scorer(PipelineConfig(weight_mode="uniform"))
    assert isinstance(scorer, UniformScorer)
    assert scorer.score(0.1, 0.2, E, E) == scorer.score(1.0, 1.4, E, -E)


def test_net_scorer_loads_file(temp_dir):
    """Test that net mode scores with the saved network."""
    net = WeightNet.random(seed=5)
    path = temp_dir / "weights.txt"
    save_weightnet(net, path)

    scorer = build_pair_scorer(PipelineConfig(weight_mode="net", weight_net_path=str(path)))
    assert isinstance(scorer, NetScorer)
    assert scorer.score(0.4, 0.7, E, -E) == pytest.approx(raw_score(net, 0.4, 0.7, E, -E))


def test_net_scorer_missing_file(temp_dir):
    """Test that a missing network file is a configuration error."""
    config = PipelineConfig(weight_mode="net", weight_net_path=str(temp_dir / "none.txt"))
    with pytest.raises(InvalidConfigError):
        build_pair_scorer(config)


def test_net_scorer_malformed_file(temp_dir):
    """Test that a malformed network file is a parse error."""
    path = temp_dir / "weights.txt"
    path.write_text("not a network\n", encoding="utf-8")
    with pytest.raises(ParseError):
        build_pair_scorer(PipelineConfig(weight_mode="net", weight_net_path=str(path)))


def test_default_gate():
    """Test that no gate file means the default gate."""
    assert build_gate(PipelineConfig()) is DEFAULT_GATE


def test_gate_from_file(temp_dir):
    """Test loading a saved gate."""
    path = temp_dir / "gate.txt"
    save_gate(GateModel(slope=-3.0, intercept=2.5), path)
    assert build_gate(PipelineConfig(gate_path=str(path))) == GateModel(slope=-3.0, intercept=2.5)


def test_gate_missing_file(temp_dir):
    """Test that a missing gate file is a configuration error."""
    with pytest.raises(InvalidConfigError):
        build_gate(PipelineConfig(gate_path=str(temp_dir / "gate.txt")))
