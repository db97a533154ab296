"""Pluggable per-view-pair surface predictors."""

from voxmvs.predictors.base import PredictorMetadata, ProbabilityCube, SurfacePredictor
from voxmvs.predictors.registry import (
    PredictorRegistry,
    default_registry,
    predict_pair,
    predictor_registry_lookup,
)

__all__ = [
    "PredictorMetadata",
    "PredictorRegistry",
    "ProbabilityCube",
    "SurfacePredictor",
    "default_registry",
    "predict_pair",
    "predictor_registry_lookup",
]
