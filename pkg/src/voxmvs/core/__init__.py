"""Core engine components."""

from voxmvs.core.api import EngineContext
from voxmvs.core.config import LoggingConfig, PipelineConfig, PredictorSpec, load_pipeline_config
from voxmvs.core.exceptions import VoxError

__all__ = [
    "EngineContext",
    "LoggingConfig",
    "PipelineConfig",
    "PredictorSpec",
    "VoxError",
    "load_pipeline_config",
]
