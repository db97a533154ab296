"""Factories for the configured view-pair scorer and cube gate."""

import logging
from pathlib import Path
from typing import Protocol

import numpy as np
from numpy.typing import NDArray

from voxmvs.core.config import PipelineConfig
from voxmvs.core.exceptions import InvalidConfigError
from voxmvs.stereo.weighting import (
    DEFAULT_GATE,
    GateModel,
    WeightNet,
    heuristic_score,
    load_gate,
    load_weightnet,
    raw_score,
)

logger = logging.getLogger(__name__)


class PairScorer(Protocol):
    """Protocol implemented by all view-pair scorers."""

    name: str

    def score(
        self, theta: float, d: float, e_i: NDArray[np.float64], e_j: NDArray[np.float64]
    ) -> float:
        """Raw score of a view pair; the softmax turns scores into weights."""
        ...


class HeuristicScorer:
    """Closed-form scorer favoring moderate baselines and similar patches."""

    name = "heuristic"

    def score(
        self, theta: float, d: float, e_i: NDArray[np.float64], e_j: NDArray[np.float64]
    ) -> float:
        return heuristic_score(theta, d)


class NetScorer:
    """Scorer backed by a fitted WeightNet."""

    name = "net"

    def __init__(self, net: WeightNet) -> None:
        self.net = net

    def score(
        self, theta: float, d: float, e_i: NDArray[np.float64], e_j: NDArray[np.float64]
    ) -> float:
        return raw_score(self.net, theta, d, e_i, e_j)


class UniformScorer:
    """Equal score for every pair (plain average of the selected pairs)."""

    name = "uniform"

    def score(
        self, theta: float, d: float, e_i: NDArray[np.float64], e_j: NDArray[np.float64]
    ) -> float:
        return 0.0


def build_pair_scorer(config: PipelineConfig) -> PairScorer:
    """
    Build the pair scorer selected by config.weight_mode.

    Args:
        config: Pipeline configuration

    Returns:
        PairScorer for the configured mode

    Raises:
        InvalidConfigError: If net mode has no usable weight network file
        ParseError: If the weight network file is malformed
    """
    if config.weight_mode == "heuristic":
        return HeuristicScorer()

    if config.weight_mode == "uniform":
        return UniformScorer()

    if not config.weight_net_path:
        raise InvalidConfigError("weight_mode 'net' requires weight_net_path")
    path = Path(config.weight_net_path)
    if not path.exists():
        raise InvalidConfigError(f"Weight network file not found: {path}")
    logger.info(f"Loading weight network from {path}")
    return NetScorer(load_weightnet(path))


def build_gate(config: PipelineConfig) -> GateModel:
    """
    Load the configured cube gate, or the default gate when none is configured.

    Raises:
        InvalidConfigError: If gate_path does not exist
        ParseError: If the gate file is malformed
    """
    if not config.gate_path:
        return DEFAULT_GATE
    path = Path(config.gate_path)
    if not path.exists():
        raise InvalidConfigError(f"Gate model file not found: {path}")
    logger.info(f"Loading cube gate from {path}")
    return load_gate(path)
