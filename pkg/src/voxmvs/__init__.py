"""
voxmvs - volumetric multi-view stereo.

Reconstructs surface voxels from calibrated images by fusing per-view-pair
surface probabilities over a lattice of overlapping voxel cubes.
"""

__version__ = "0.3.0"

from voxmvs.core.api import EngineContext
from voxmvs.core.config import PipelineConfig, PredictorSpec
from voxmvs.core.exceptions import VoxError
from voxmvs.core.pipeline import Reconstruction, RunReport, reconstruct

__all__ = [
    "EngineContext",
    "PipelineConfig",
    "PredictorSpec",
    "Reconstruction",
    "RunReport",
    "VoxError",
    "reconstruct",
]
