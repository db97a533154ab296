"""
Training data for the pair weighting network and the cube gate.

Every view pair of every cube of a synthetic scene is run through the
predictor on its own. The pair's quality is the intersection-over-union of its
thresholded prediction with the ground-truth surface voxels of the cube; the
pair counts as similar when the cube holds surface and the IoU reaches
SIMILAR_IOU.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from voxmvs.core.config import PipelineConfig
from voxmvs.core.exceptions import EmptyInputError, InvalidConfigError
from voxmvs.core.pipeline import cube_pair_features
from voxmvs.predictors.registry import PredictorRegistry, default_registry
from voxmvs.scene_io import OccGrid, load_scene, read_occgrid
from voxmvs.stereo.cvc import CvcVolume, build_cvc
from voxmvs.stereo.geometry import CubeLattice, Index3, build_lattice
from voxmvs.stereo.weighting import WeightSample
from voxmvs.synth.scene import GROUND_TRUTH_NAME, MANIFEST_NAME

logger = logging.getLogger(__name__)

SIMILAR_IOU = 0.2


@dataclass(frozen=True, eq=False)
class PairSample:
    """Features and labels of one view pair of one cube."""

    cube_index: Index3
    pair: tuple[int, int]
    theta: float
    d: float
    e_i: NDArray[np.float64]
    e_j: NDArray[np.float64]
    quality: float
    similar: bool

    def weight_sample(self) -> WeightSample:
        return WeightSample(
            theta=self.theta, d=self.d, e_i=self.e_i, e_j=self.e_j, quality=self.quality
        )

    def gate_sample(self) -> tuple[float, bool]:
        return (self.d, self.similar)


def iou(pred: NDArray[np.bool_], truth: NDArray[np.bool_]) -> float:
    """Intersection over union of two masks (0 when both are empty)."""
    union = int(np.count_nonzero(pred | truth))
    if union == 0:
        return 0.0
    return int(np.count_nonzero(pred & truth)) / union


def _lattice_truth(gt: OccGrid, lattice: CubeLattice) -> NDArray[np.bool_]:
    """Ground truth padded or cropped to the lattice voxel grid."""
    if gt.origin is None or gt.voxel_size is None:
        raise InvalidConfigError("ground-truth grid carries no origin or voxel size")
    aligned = np.allclose(gt.origin, lattice.bbox_min) and np.isclose(
        gt.voxel_size, lattice.voxel_size
    )
    if not aligned:
        raise InvalidConfigError("ground-truth grid is not aligned with the scene lattice")
    truth = np.zeros(lattice.voxel_dims, dtype=bool)
    nx, ny, nz = (min(a, b) for a, b in zip(gt.occ.shape, lattice.voxel_dims, strict=True))
    truth[:nx, :ny, :nz] = gt.occ[:nx, :ny, :nz]
    return truth


def collect_pair_samples(
    scene_dir: Path,
    config: PipelineConfig,
    registry: PredictorRegistry | None = None,
) -> list[PairSample]:
    """
    Build labeled pair samples from a saved synthetic scene.

    Args:
        scene_dir: Directory written by synth.save_scene (scene.txt and gt.occ)
        config: Pipeline configuration (cube size, stride, predictor, tau)
        registry: Predictor registry (built-ins only when None)

    Returns:
        Samples in lattice order, pairs in lexicographic order within a cube
    """
    scene_dir = Path(scene_dir)
    scene = load_scene(scene_dir / MANIFEST_NAME)
    gt = read_occgrid(scene_dir / GROUND_TRUTH_NAME)
    voxel_size = gt.voxel_size or scene.manifest.voxel_size or config.voxel_size
    if voxel_size is None:
        raise InvalidConfigError(f"No voxel size for scene {scene_dir}")

    lattice = build_lattice(scene.manifest.bbox, voxel_size, config.cube_size, config.stride)
    truth = _lattice_truth(gt, lattice)
    predictor = (registry or default_registry()).get(config.predictor)
    spec = config.predictor_spec()
    by_id = {view.id: view for view in scene.views}

    samples: list[PairSample] = []
    for cube in lattice:
        features = cube_pair_features(cube, scene.views)
        if not features.pairs:
            continue
        ox, oy, oz = cube.offset
        cube_truth = truth[ox : ox + cube.s, oy : oy + cube.s, oz : oz + cube.s]
        has_surface = bool(np.any(cube_truth))

        cvcs: dict[int, CvcVolume] = {}
        for (i, j), theta, d in zip(features.pairs, features.thetas, features.dissims, strict=True):
            for view_id in (i, j):
                if view_id not in cvcs:
                    cvcs[view_id] = build_cvc(cube, by_id[view_id])
            prob = predictor.predict(cvcs[i], cvcs[j], spec)
            quality = iou(prob.p > config.tau, cube_truth)
            samples.append(
                PairSample(
                    cube_index=cube.index,
                    pair=(i, j),
                    theta=theta,
                    d=d,
                    e_i=features.embeddings[i].vec,
                    e_j=features.embeddings[j].vec,
                    quality=quality,
                    similar=has_surface and quality >= SIMILAR_IOU,
                )
            )

    logger.info(f"Collected {len(samples)} pair samples from {scene_dir}")
    return samples


def collect_from_dirs(
    scene_dirs: Sequence[Path],
    config: PipelineConfig,
    registry: PredictorRegistry | None = None,
) -> list[PairSample]:
    """
    Collect samples from every scene directory (a directory holding scene.txt
    counts as one scene; otherwise its immediate subdirectories are scanned).

    Raises:
        EmptyInputError: If no scene is found
    """
    found: list[Path] = []
    for root in scene_dirs:
        root = Path(root)
        if (root / MANIFEST_NAME).exists():
            found.append(root)
        else:
            found.extend(sorted(p for p in root.iterdir() if (p / MANIFEST_NAME).exists()))
    if not found:
        roots = ", ".join(str(d) for d in scene_dirs)
        raise EmptyInputError(f"No synthetic scenes found under {roots}")

    samples: list[PairSample] = []
    for scene_dir in found:
        samples.extend(collect_pair_samples(scene_dir, config, registry))
    return samples
