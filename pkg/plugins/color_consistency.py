"""
Color consistency predictor plugin.

Scores a voxel by how closely the two views agree on its RGB color, averaged
over the K x K x K neighborhood of jointly valid voxels. Unlike ZNCC it is not
invariant to gain or offset, which makes it the classic photo-consistency
baseline for scenes under constant lighting.

Load with: voxmvs reconstruct --predictor-dir plugins ... (predictor=color-consistency)
"""

import numpy as np
from scipy.ndimage import uniform_filter

from voxmvs.core.config import PredictorSpec
from voxmvs.predictors.base import (
    PredictorMetadata,
    ProbabilityCube,
    SurfacePredictor,
    check_pair,
    pair_key,
)
from voxmvs.stereo.cvc import CvcVolume

# Color distance (RGB in [0, 1]) at which the unsharpened score falls to exp(-1/2).
COLOR_SIGMA = 0.1


class ColorConsistencyPredictor(SurfacePredictor):
    """Gaussian score of the windowed mean squared RGB difference."""

    @property
    def metadata(self) -> PredictorMetadata:
        return PredictorMetadata(
            name="color-consistency",
            version="1.0.0",
            description="Windowed RGB agreement of the two views",
            author="voxmvs",
        )

    def predict(self, cvc_i: CvcVolume, cvc_j: CvcVolume, spec: PredictorSpec) -> ProbabilityCube:
        check_pair(cvc_i, cvc_j)
        joint = cvc_i.valid & cvc_j.valid
        sq_diff = np.sum((cvc_i.colors - cvc_j.colors) ** 2, axis=-1) * joint

        size = spec.window
        count = uniform_filter(joint.astype(np.float64), size=size, mode="constant")
        total = uniform_filter(sq_diff, size=size, mode="constant")
        enough = count * size**3 >= np.ceil(size**3 / 2) - 1e-9
        mean_sq = total / np.maximum(count, 1e-12)

        score = np.exp(-mean_sq / (2.0 * COLOR_SIGMA**2)) ** spec.sharpness
        p = np.where(joint & enough, score, 0.0)
        return ProbabilityCube(
            cube_index=cvc_i.cube_index,
            pair=pair_key(cvc_i, cvc_j),
            p=np.clip(p, 0.0, 1.0),
            valid=joint,
        )
