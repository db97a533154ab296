"""
Patch descriptor used to compare how two views see a cube.

A 64x64 grayscale patch is cropped around the projected cube center and
mapped to a 128-D unit vector: an 8x8 block-mean intensity map (mean removed)
followed by an 8x8 block-mean gradient-magnitude map, jointly L2-normalized.
Gain and offset changes of the patch cancel out.
"""

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from voxmvs.core.exceptions import CubeMismatchError
from voxmvs.stereo.cvc import LUMA_WEIGHTS
from voxmvs.stereo.geometry import CameraView, Cube, Index3, project

PATCH_SIZE = 64
POOLED_SIDE = 8
EMBEDDING_DIM = 2 * POOLED_SIDE * POOLED_SIDE
FLAT_NORM = 1e-12


@dataclass(frozen=True, eq=False)
class PatchEmbedding:
    """Descriptor of the patch a view shows around a cube center."""

    vec: NDArray[np.float64]
    source_view: int
    cube_index: Index3

    @property
    def is_flat(self) -> bool:
        return not np.any(self.vec)


def extract_patch(cube: Cube, view: CameraView) -> NDArray[np.float64] | None:
    """
    Crop the 64x64 grayscale patch centered on the projected cube center.

    Returns:
        (64, 64) array with values in [0, 1], or None when the center is out of
        the frustum or the crop would leave the image
    """
    projection = project(view.proj, cube.center(), view.image_shape)
    if projection is None:
        return None

    half = PATCH_SIZE // 2
    col = int(np.floor(projection.u + 0.5))
    row = int(np.floor(projection.v + 0.5))
    top, left = row - half, col - half
    if top < 0 or left < 0 or top + PATCH_SIZE > view.height or left + PATCH_SIZE > view.width:
        return None

    crop = view.image[top : top + PATCH_SIZE, left : left + PATCH_SIZE].astype(np.float64) / 255.0
    return crop @ LUMA_WEIGHTS


def _block_mean(values: NDArray[np.float64]) -> NDArray[np.float64]:
    block = values.shape[0] // POOLED_SIDE
    return values.reshape(POOLED_SIDE, block, POOLED_SIDE, block).mean(axis=(1, 3))


def embed(
    patch: NDArray[np.float64],
    *,
    source_view: int = -1,
    cube_index: Index3 = (0, 0, 0),
) -> PatchEmbedding:
    """
    Map a 64x64 patch to its 128-D descriptor.

    Flat patches (pre-normalization norm below 1e-12) map to the zero vector.
    """
    patch = np.asarray(patch, dtype=np.float64)
    if patch.shape != (PATCH_SIZE, PATCH_SIZE):
        raise ValueError(f"patch must be {PATCH_SIZE}x{PATCH_SIZE}, got {patch.shape}")

    intensity = _block_mean(patch)
    intensity = intensity - intensity.mean()
    grad_rows, grad_cols = np.gradient(patch)
    gradient = _block_mean(np.hypot(grad_rows, grad_cols))

    vec = np.concatenate([intensity.ravel(), gradient.ravel()])
    norm = float(np.linalg.norm(vec))
    vec = np.zeros(EMBEDDING_DIM) if norm < FLAT_NORM else vec / norm
    return PatchEmbedding(vec=vec, source_view=source_view, cube_index=cube_index)


def embed_view(cube: Cube, view: CameraView) -> PatchEmbedding | None:
    """Embed the patch of a view around a cube, or None if the patch is off-frame."""
    patch = extract_patch(cube, view)
    if patch is None:
        return None
    return embed(patch, source_view=view.id, cube_index=cube.index)


def dissimilarity(e_i: PatchEmbedding, e_j: PatchEmbedding) -> float:
    """
    Euclidean distance between two embeddings of the same cube.

    Raises:
        CubeMismatchError: If the embeddings describe different cubes
    """
    if tuple(e_i.cube_index) != tuple(e_j.cube_index):
        raise CubeMismatchError(
            f"Cannot compare embeddings of cubes {e_i.cube_index} and {e_j.cube_index}"
        )
    return float(np.linalg.norm(e_i.vec - e_j.vec))
