"""
Accuracy and completeness of a reconstruction against ground truth.

Nearest-neighbor distances are exact (k-d tree queries).
"""

import logging

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, Field
from scipy.spatial import cKDTree

from voxmvs.core.exceptions import EmptyGroundTruthError

logger = logging.getLogger(__name__)


class EvalReport(BaseModel):
    """Scores of a predicted point set against the ground truth."""

    accuracy: float | None = Field(
        ..., description="Mean predicted-to-truth distance; None if nothing was predicted"
    )
    completeness: float = Field(
        ..., description="Fraction of truth points with a prediction within eps"
    )
    precision: float = Field(
        ..., description="Fraction of predicted points with a truth point within eps"
    )
    f_score: float = Field(..., description="Harmonic mean of precision and completeness")
    eps: float = Field(..., description="Distance tolerance")
    n_pred: int = Field(..., description="Number of predicted points")
    n_gt: int = Field(..., description="Number of truth points")

    @property
    def recall(self) -> float:
        return self.completeness

    def to_lines(self) -> list[str]:
        """key=value report lines."""
        accuracy = "undefined" if self.accuracy is None else repr(self.accuracy)
        return [
            f"accuracy={accuracy}",
            f"completeness={self.completeness!r}",
            f"precision={self.precision!r}",
            f"recall={self.recall!r}",
            f"f_score={self.f_score!r}",
            f"eps={self.eps!r}",
            f"n_pred={self.n_pred}",
            f"n_gt={self.n_gt}",
        ]


def nearest_distances(
    queries: NDArray[np.float64], reference: NDArray[np.float64]
) -> NDArray[np.float64]:
    """Distance from every query point to its nearest reference point."""
    if len(queries) == 0:
        return np.zeros(0, dtype=np.float64)
    distances, _ = cKDTree(reference).query(queries)
    return np.asarray(distances, dtype=np.float64)


def evaluate(predicted: NDArray[np.float64], gt: NDArray[np.float64], eps: float) -> EvalReport:
    """
    Score predicted points (world units) against ground-truth points.

    Args:
        predicted: (N, 3) predicted voxel centers
        gt: (M, 3) ground-truth voxel centers
        eps: Distance tolerance for completeness and precision

    Raises:
        EmptyGroundTruthError: If gt is empty
        ValueError: If eps is not positive
    """
    if not eps > 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    pred = np.asarray(predicted, dtype=np.float64).reshape(-1, 3)
    truth = np.asarray(gt, dtype=np.float64).reshape(-1, 3)
    if len(truth) == 0:
        raise EmptyGroundTruthError("Cannot evaluate against an empty ground truth")

    if len(pred) == 0:
        logger.warning("Evaluating an empty reconstruction")
        return EvalReport(
            accuracy=None,
            completeness=0.0,
            precision=0.0,
            f_score=0.0,
            eps=eps,
            n_pred=0,
            n_gt=len(truth),
        )

    pred_to_gt = nearest_distances(pred, truth)
    gt_to_pred = nearest_distances(truth, pred)
    precision = float(np.mean(pred_to_gt <= eps))
    completeness = float(np.mean(gt_to_pred <= eps))
    total = precision + completeness
    f_score = 2.0 * precision * completeness / total if total > 0 else 0.0
    return EvalReport(
        accuracy=float(np.mean(pred_to_gt)),
        completeness=completeness,
        precision=precision,
        f_score=f_score,
        eps=eps,
        n_pred=len(pred),
        n_gt=len(truth),
    )
