"""
View-pair enumeration, top-N_v selection and weighted probability fusion.
"""

import itertools
import logging
from collections.abc import Sequence
from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import NDArray

from voxmvs.core.exceptions import ShapeMismatchError, TooFewViewsError, ZeroWeightSumError
from voxmvs.predictors.base import ProbabilityCube
from voxmvs.stereo.descriptor import extract_patch
from voxmvs.stereo.geometry import CameraView, Cube, Index3
from voxmvs.stereo.weighting import PairEntry, PairWeighting

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class FusedCube:
    """
    Fused surface probability of one cube.

    votes holds the per-voxel ray-pooling vote fraction once
    binarize.ray_votes has run on the cube.
    """

    cube_index: Index3
    p: NDArray[np.float64]
    valid: NDArray[np.bool_]
    pair_set: tuple[PairEntry, ...] = ()
    votes: NDArray[np.float64] | None = None

    @property
    def s(self) -> int:
        return int(self.p.shape[0])


def enumerate_pairs(views: Sequence[CameraView], cube: Cube) -> list[tuple[int, int]]:
    """
    List the view pairs whose patches around the cube are both on-frame.

    Returns:
        Pairs (id_i, id_j) with id_i < id_j, in lexicographic order

    Raises:
        TooFewViewsError: If fewer than two views are given
    """
    if len(views) < 2:
        raise TooFewViewsError(f"Need at least 2 views, got {len(views)}")

    visible = sorted(view.id for view in views if extract_patch(cube, view) is not None)
    return list(itertools.combinations(visible, 2))


def select_pairs(weighting: PairWeighting, n_v: int) -> tuple[PairEntry, ...]:
    """
    Keep the n_v highest-weight pairs and renormalize their weights to sum 1.

    Ties are broken by the lexicographic pair id. When every kept weight is 0
    the selection is weighted uniformly.
    """
    if n_v < 1:
        raise ValueError(f"n_v must be >= 1, got {n_v}")

    ranked = sorted(weighting.entries, key=lambda e: (-e.w, e.pair))[:n_v]
    total = sum(e.w for e in ranked)
    if total > 0:
        return tuple(replace(e, w=e.w / total) for e in ranked)
    return tuple(replace(e, w=1.0 / len(ranked)) for e in ranked)


def fuse(
    prob_cubes: Sequence[ProbabilityCube],
    weights: Sequence[float],
    pair_set: tuple[PairEntry, ...] = (),
) -> FusedCube:
    """
    Weighted average of per-pair surface probabilities.

    At each voxel only the pairs valid there contribute, to the numerator and
    the denominator alike. Voxels valid in no pair get p = 0. Inputs are summed
    in pair-id order, so the result does not depend on the input order.

    Args:
        prob_cubes: Per-pair predictions of one cube
        weights: One non-negative weight per prediction
        pair_set: Selected pair entries recorded on the result

    Raises:
        ShapeMismatchError: On length, cube or grid mismatches
        ZeroWeightSumError: If the weights do not sum to a positive value
    """
    if len(prob_cubes) != len(weights):
        raise ShapeMismatchError(f"{len(prob_cubes)} probability cubes but {len(weights)} weights")
    w = np.asarray(weights, dtype=np.float64)
    if len(prob_cubes) == 0 or not np.all(np.isfinite(w)) or np.any(w < 0) or not w.sum() > 0:
        raise ZeroWeightSumError(
            f"Fusion weights must be non-negative with a positive sum, got {list(weights)}"
        )

    first = prob_cubes[0]
    for cube in prob_cubes[1:]:
        if tuple(cube.cube_index) != tuple(first.cube_index):
            raise ShapeMismatchError(f"Cannot fuse cubes {first.cube_index} and {cube.cube_index}")
        if cube.p.shape != first.p.shape:
            raise ShapeMismatchError(f"Probability grids differ: {first.p.shape} vs {cube.p.shape}")

    order = sorted(range(len(prob_cubes)), key=lambda n: (prob_cubes[n].pair, float(w[n])))
    num = np.zeros(first.p.shape, dtype=np.float64)
    den = np.zeros(first.p.shape, dtype=np.float64)
    for n in order:
        weight = np.where(prob_cubes[n].valid, w[n], 0.0)
        num += weight * prob_cubes[n].p
        den += weight

    has_weight = den > 0
    p = np.zeros_like(num)
    np.divide(num, den, out=p, where=has_weight)
    p = np.clip(p, 0.0, 1.0)
    logger.debug(f"Fused {len(prob_cubes)} pairs for cube {first.cube_index}")
    return FusedCube(cube_index=first.cube_index, p=p, valid=has_weight, pair_set=pair_set)
