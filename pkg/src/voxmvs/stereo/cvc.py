"""
Colored voxel cubes.

A colored voxel cube (CVC) stores, for every voxel of a cube, the image color
found where the voxel center projects into one view. Camera geometry is thereby
encoded in the volume itself. Occlusion is not modeled here.
"""

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from voxmvs.stereo.geometry import CameraView, Cube, Index3, project_points

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float64)


@dataclass(frozen=True, eq=False)
class CvcVolume:
    """Per-view colored voxel cube."""

    cube_index: Index3
    view_id: int
    colors: NDArray[np.float64]
    valid: NDArray[np.bool_]

    @property
    def s(self) -> int:
        return int(self.valid.shape[0])


def bilinear_sample(
    image: NDArray[np.uint8], uv: NDArray[np.float64]
) -> NDArray[np.float64]:
    """
    Bilinearly sample an HxWx3 image at (N, 2) in-frame pixel coordinates.

    Neighbors past the last row/column are clamped to the edge, so every
    coordinate in [0, W-1] x [0, H-1] is sampled from real pixels.

    Returns:
        (N, 3) colors in [0, 1]
    """
    height, width = image.shape[:2]
    u = uv[:, 0]
    v = uv[:, 1]
    x0 = np.clip(np.floor(u).astype(np.int64), 0, width - 1)
    y0 = np.clip(np.floor(v).astype(np.int64), 0, height - 1)
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    fx = (u - x0)[:, None]
    fy = (v - y0)[:, None]

    img = image.astype(np.float64) / 255.0
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return np.clip(top * (1.0 - fy) + bottom * fy, 0.0, 1.0)


def build_cvc(cube: Cube, view: CameraView) -> CvcVolume:
    """
    Build the colored voxel cube of a cube as seen from one view.

    Voxels whose centers project behind the camera or outside the frame are
    marked invalid and keep the color 0.
    """
    s = cube.s
    centers = cube.voxel_centers().reshape(-1, 3)
    uv, _, in_frame = project_points(view.proj, centers, view.image_shape)

    colors = np.zeros((centers.shape[0], 3), dtype=np.float64)
    if np.any(in_frame):
        colors[in_frame] = bilinear_sample(view.image, uv[in_frame])

    return CvcVolume(
        cube_index=cube.index,
        view_id=view.id,
        colors=colors.reshape(s, s, s, 3),
        valid=in_frame.reshape(s, s, s),
    )


def cvc_gray(cvc: CvcVolume) -> NDArray[np.float64]:
    """Luminance of every voxel (0.299R + 0.587G + 0.114B), 0 where invalid."""
    gray = cvc.colors @ LUMA_WEIGHTS
    return np.where(cvc.valid, gray, 0.0)
