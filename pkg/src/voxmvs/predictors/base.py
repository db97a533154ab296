"""
Base classes and interfaces for surface predictors.

A surface predictor turns the colored voxel cubes of a view pair into a
per-voxel surface confidence. This module defines the contract every
predictor, built-in or plugin, must implement.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field

from voxmvs.core.config import PredictorSpec
from voxmvs.core.exceptions import ShapeMismatchError
from voxmvs.stereo.cvc import CvcVolume
from voxmvs.stereo.geometry import Index3


@dataclass(frozen=True, eq=False)
class ProbabilityCube:
    """Surface confidence of one view pair over one cube."""

    cube_index: Index3
    pair: tuple[int, int]
    p: NDArray[np.float64]
    valid: NDArray[np.bool_]


class PredictorMetadata(BaseModel):
    """Predictor identity used for registration and listing."""

    model_config = ConfigDict(frozen=True)

    name: str = Field(..., description="Registry key (the config 'predictor' value)")
    version: str = Field(default="1.0.0", description="Predictor version")
    description: str = Field(..., description="Human-readable description")
    author: str = Field(default="Unknown", description="Predictor author")


class SurfacePredictor(ABC):
    """
    Abstract base class for all surface predictors.

    Implementations must be stateless after construction: one instance is
    shared by every worker thread of a reconstruction.
    """

    @property
    @abstractmethod
    def metadata(self) -> PredictorMetadata:
        """Return predictor metadata."""

    @abstractmethod
    def predict(self, cvc_i: CvcVolume, cvc_j: CvcVolume, spec: PredictorSpec) -> ProbabilityCube:
        """
        Predict per-voxel surface confidence for a view pair.

        Args:
            cvc_i: Colored voxel cube of the first view
            cvc_j: Colored voxel cube of the second view (same cube)
            spec: Predictor parameters

        Returns:
            ProbabilityCube with p in [0, 1] and p = 0 wherever valid is False
        """

    def __repr__(self) -> str:
        return f"<Predictor: {self.metadata.name} v{self.metadata.version}>"


def check_pair(cvc_i: CvcVolume, cvc_j: CvcVolume) -> None:
    """
    Ensure two CVCs describe the same cube geometry.

    Raises:
        ShapeMismatchError: If cube indices or voxel grids differ
    """
    if tuple(cvc_i.cube_index) != tuple(cvc_j.cube_index):
        raise ShapeMismatchError(
            f"CVCs belong to different cubes: {cvc_i.cube_index} vs {cvc_j.cube_index}"
        )
    if cvc_i.valid.shape != cvc_j.valid.shape or cvc_i.colors.shape != cvc_j.colors.shape:
        raise ShapeMismatchError(
            f"CVC shapes differ: {cvc_i.colors.shape} vs {cvc_j.colors.shape}"
        )


def pair_key(cvc_i: CvcVolume, cvc_j: CvcVolume) -> tuple[int, int]:
    """Unordered pair identity (smaller view id first)."""
    a, b = cvc_i.view_id, cvc_j.view_id
    return (a, b) if a <= b else (b, a)
