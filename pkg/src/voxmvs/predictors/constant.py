"""Predictor that reports p = 0.5 wherever both views see the voxel."""

import numpy as np

from voxmvs.core.config import PredictorSpec
from voxmvs.predictors.base import (
    PredictorMetadata,
    ProbabilityCube,
    SurfacePredictor,
    check_pair,
    pair_key,
)
from voxmvs.stereo.cvc import CvcVolume


class ConstantHalfPredictor(SurfacePredictor):
    """Uninformative predictor used to exercise the pipeline without photo-consistency."""

    @property
    def metadata(self) -> PredictorMetadata:
        return PredictorMetadata(
            name="constant-half",
            description="Returns 0.5 at every jointly valid voxel",
        )

    def predict(self, cvc_i: CvcVolume, cvc_j: CvcVolume, spec: PredictorSpec) -> ProbabilityCube:
        check_pair(cvc_i, cvc_j)
        valid = cvc_i.valid & cvc_j.valid
        return ProbabilityCube(
            cube_index=cvc_i.cube_index,
            pair=pair_key(cvc_i, cvc_j),
            p=np.where(valid, 0.5, 0.0),
            valid=valid,
        )
