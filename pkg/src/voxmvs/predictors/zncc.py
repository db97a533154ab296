"""
Windowed zero-mean normalized cross-correlation predictor.

For every voxel the K x K x K neighborhoods of both grayscale CVCs are
compared over the voxels valid in both views. The correlation z in [-1, 1]
is mapped to a confidence p = ((z + 1) / 2) ** sharpness.
"""

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import NDArray

from voxmvs.core.config import PredictorSpec
from voxmvs.predictors.base import (
    PredictorMetadata,
    ProbabilityCube,
    SurfacePredictor,
    check_pair,
    pair_key,
)
from voxmvs.stereo.cvc import CvcVolume, cvc_gray

# Sum of squared deviations at or below this counts as a constant window.
FLAT_WINDOW = 1e-18


def _windows(volume: NDArray[np.float64], window: int) -> NDArray[np.float64]:
    """(s, s, s, K^3) neighborhoods of every voxel, zero-padded at the cube border."""
    radius = window // 2
    padded = np.pad(volume, radius, mode="constant")
    views = sliding_window_view(padded, (window, window, window))
    return views.reshape(*volume.shape, window**3)


def zncc_volume(
    gray_i: NDArray[np.float64],
    gray_j: NDArray[np.float64],
    joint: NDArray[np.bool_],
    window: int,
) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    """
    Masked windowed ZNCC of two grayscale volumes.

    Returns:
        (z, enough): correlation per voxel (0 for constant windows) and the mask
        of voxels whose window holds at least ceil(K^3 / 2) jointly valid voxels
    """
    mask = _windows(joint.astype(np.float64), window)
    count = mask.sum(axis=-1)
    enough = count >= math.ceil(window**3 / 2)
    safe_count = np.maximum(count, 1.0)

    win_i = _windows(gray_i, window)
    win_j = _windows(gray_j, window)
    mean_i = (win_i * mask).sum(axis=-1) / safe_count
    mean_j = (win_j * mask).sum(axis=-1) / safe_count
    dev_i = (win_i - mean_i[..., None]) * mask
    dev_j = (win_j - mean_j[..., None]) * mask

    cov = (dev_i * dev_j).sum(axis=-1)
    var_i = (dev_i * dev_i).sum(axis=-1)
    var_j = (dev_j * dev_j).sum(axis=-1)

    informative = enough & (var_i > FLAT_WINDOW) & (var_j > FLAT_WINDOW)
    z = np.zeros_like(cov)
    z[informative] = cov[informative] / np.sqrt(var_i[informative] * var_j[informative])
    return np.clip(z, -1.0, 1.0), enough


class ZnccPredictor(SurfacePredictor):
    """Photo-consistency predictor based on windowed ZNCC."""

    @property
    def metadata(self) -> PredictorMetadata:
        return PredictorMetadata(
            name="zncc",
            description="Windowed zero-mean normalized cross-correlation of grayscale CVCs",
        )

    def predict(self, cvc_i: CvcVolume, cvc_j: CvcVolume, spec: PredictorSpec) -> ProbabilityCube:
        check_pair(cvc_i, cvc_j)
        joint = cvc_i.valid & cvc_j.valid
        z, enough = zncc_volume(cvc_gray(cvc_i), cvc_gray(cvc_j), joint, spec.window)
        scored = enough & joint
        p = np.where(scored, ((z + 1.0) / 2.0) ** spec.sharpness, 0.0)
        return ProbabilityCube(
            cube_index=cvc_i.cube_index,
            pair=pair_key(cvc_i, cvc_j),
            p=np.clip(p, 0.0, 1.0),
            valid=joint,
        )
