"""
Camera model, perspective projection and the cube lattice.

Pixel coordinates follow the convention that pixel (x, y) is centered on the
integer coordinate (x, y); an image of width W covers u in [0, W-1] for the
purpose of deciding whether a projection lands in the frame.
"""

import itertools
import logging
import math
from collections.abc import Iterator
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from voxmvs.core.exceptions import DegenerateRayError, InvalidConfigError, SingularCameraError

logger = logging.getLogger(__name__)

# Homogeneous depth at or below this value counts as behind the camera.
MIN_DEPTH = 1e-12
SINGULAR_DET = 1e-12

Index3 = tuple[int, int, int]
BBox = tuple[float, float, float, float, float, float]


@dataclass(frozen=True)
class Projection:
    """A point projected into an image."""

    u: float
    v: float
    depth: float


def camera_center(proj: NDArray[np.float64]) -> NDArray[np.float64]:
    """
    Compute the world position of a camera from its projection matrix.

    Args:
        proj: 3x4 projection matrix [M | p4]

    Returns:
        3-vector -M^-1 p4

    Raises:
        SingularCameraError: If |det M| < 1e-12
    """
    proj = np.asarray(proj, dtype=np.float64)
    m = proj[:, :3]
    if abs(np.linalg.det(m)) < SINGULAR_DET:
        det = np.linalg.det(m)
        raise SingularCameraError(f"Projection matrix has singular 3x3 block (det={det})")
    return -np.linalg.solve(m, proj[:, 3])


@dataclass(frozen=True, eq=False)
class CameraView:
    """One calibrated input image."""

    id: int
    image: NDArray[np.uint8]
    proj: NDArray[np.float64]
    center: NDArray[np.float64] = field(init=False)

    def __post_init__(self) -> None:
        proj = np.array(self.proj, dtype=np.float64)
        if proj.shape != (3, 4):
            raise InvalidConfigError(f"Projection matrix must be 3x4, got {proj.shape}")
        image = np.asarray(self.image, dtype=np.uint8)
        if image.ndim != 3 or image.shape[2] != 3:
            raise InvalidConfigError(f"Image must be HxWx3, got {image.shape}")
        proj.setflags(write=False)
        object.__setattr__(self, "proj", proj)
        object.__setattr__(self, "image", image)
        object.__setattr__(self, "center", camera_center(proj))

    @property
    def height(self) -> int:
        return int(self.image.shape[0])

    @property
    def width(self) -> int:
        return int(self.image.shape[1])

    @property
    def image_shape(self) -> tuple[int, int]:
        return self.height, self.width


def project(
    proj: NDArray[np.float64],
    point: NDArray[np.float64] | tuple[float, float, float],
    image_shape: tuple[int, int] | None = None,
) -> Projection | None:
    """
    Project a world point.

    Args:
        proj: 3x4 projection matrix
        point: World 3-vector
        image_shape: Optional (height, width); when given, projections outside
            the frame are rejected

    Returns:
        Projection, or None when the point is out of the frustum
    """
    homog = np.asarray(proj, dtype=np.float64) @ np.append(np.asarray(point, dtype=np.float64), 1.0)
    w = float(homog[2])
    if w <= MIN_DEPTH:
        return None
    u = float(homog[0] / w)
    v = float(homog[1] / w)
    if image_shape is not None:
        height, width = image_shape
        if not (0.0 <= u <= width - 1 and 0.0 <= v <= height - 1):
            return None
    return Projection(u=u, v=v, depth=w)


def project_points(
    proj: NDArray[np.float64],
    points: NDArray[np.float64],
    image_shape: tuple[int, int],
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.bool_]]:
    """
    Project an (N, 3) array of world points.

    Returns:
        (uv, depth, in_frame): (N, 2) pixel coordinates, (N,) homogeneous
        depths, and the mask of points that are in front of the camera and
        inside the frame. uv is undefined where in_frame is False.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    proj = np.asarray(proj, dtype=np.float64)
    homog = pts @ proj[:, :3].T + proj[:, 3]
    depth = homog[:, 2]
    in_front = depth > MIN_DEPTH
    safe = np.where(in_front, depth, 1.0)
    uv = homog[:, :2] / safe[:, None]
    height, width = image_shape
    in_frame = (
        in_front
        & (uv[:, 0] >= 0.0)
        & (uv[:, 0] <= width - 1)
        & (uv[:, 1] >= 0.0)
        & (uv[:, 1] <= height - 1)
    )
    return uv, depth, in_frame


@dataclass(frozen=True)
class Cube:
    """An s x s x s voxel cube of the scene lattice."""

    index: Index3
    origin: tuple[float, float, float]
    voxel_size: float
    s: int
    offset: Index3 = (0, 0, 0)

    def __post_init__(self) -> None:
        if self.s < 2:
            raise InvalidConfigError(f"Cube side must be >= 2 voxels, got {self.s}")
        if not self.voxel_size > 0:
            raise InvalidConfigError(f"voxel_size must be > 0, got {self.voxel_size}")

    @property
    def shape(self) -> Index3:
        return self.s, self.s, self.s

    def voxel_center(self, i: int, j: int, k: int) -> NDArray[np.float64]:
        """World center of voxel (i, j, k)."""
        ijk = np.array([i, j, k], dtype=np.float64)
        return np.asarray(self.origin) + self.voxel_size * (ijk + 0.5)

    def voxel_centers(self) -> NDArray[np.float64]:
        """World centers of every voxel as an (s, s, s, 3) array."""
        axis = (np.arange(self.s, dtype=np.float64) + 0.5) * self.voxel_size
        grid = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1)
        return grid + np.asarray(self.origin, dtype=np.float64)

    def center(self) -> NDArray[np.float64]:
        """World center of the cube (the center of its central voxel region)."""
        return np.asarray(self.origin, dtype=np.float64) + 0.5 * self.s * self.voxel_size


@dataclass(frozen=True)
class Overlap:
    """Voxels shared by two cubes, addressed in each cube's local indices."""

    a: tuple[slice, slice, slice]
    b: tuple[slice, slice, slice]

    @property
    def size(self) -> int:
        return math.prod(sl.stop - sl.start for sl in self.a)


@dataclass(frozen=True)
class CubeLattice:
    """Overlapping cube partition of the scene bounding box."""

    bbox: BBox
    voxel_size: float
    s: int
    stride: int
    counts: Index3
    cubes: tuple[Cube, ...]

    def __iter__(self) -> Iterator[Cube]:
        return iter(self.cubes)

    def __len__(self) -> int:
        return len(self.cubes)

    @property
    def bbox_min(self) -> NDArray[np.float64]:
        return np.asarray(self.bbox[:3], dtype=np.float64)

    @property
    def voxel_dims(self) -> Index3:
        """Lattice-wide voxel grid covered by the cubes."""
        nx, ny, nz = ((n - 1) * self.stride + self.s for n in self.counts)
        return nx, ny, nz

    def cube(self, index: Index3) -> Cube:
        """Look up a cube by its lattice index."""
        i, j, k = index
        ny, nz = self.counts[1], self.counts[2]
        return self.cubes[(i * ny + j) * nz + k]

    def contains(self, index: Index3) -> bool:
        return all(0 <= c < n for c, n in zip(index, self.counts, strict=True))

    def neighbors(self, index: Index3) -> list[Index3]:
        """Face-adjacent lattice neighbors of a cube, in lexicographic order."""
        result = []
        for axis in range(3):
            for step in (-1, 1):
                other = list(index)
                other[axis] += step
                candidate = (other[0], other[1], other[2])
                if self.contains(candidate):
                    result.append(candidate)
        return sorted(result)

    def overlap(self, a: Index3, b: Index3) -> Overlap | None:
        """Local index slices of the voxels shared by cubes a and b (None if disjoint)."""
        cube_a, cube_b = self.cube(a), self.cube(b)
        slices_a = []
        slices_b = []
        for axis in range(3):
            lo = max(cube_a.offset[axis], cube_b.offset[axis])
            hi = min(cube_a.offset[axis], cube_b.offset[axis]) + self.s
            if hi <= lo:
                return None
            slices_a.append(slice(lo - cube_a.offset[axis], hi - cube_a.offset[axis]))
            slices_b.append(slice(lo - cube_b.offset[axis], hi - cube_b.offset[axis]))
        return Overlap(
            a=(slices_a[0], slices_a[1], slices_a[2]),
            b=(slices_b[0], slices_b[1], slices_b[2]),
        )

    def global_voxel_indices(self, cube: Cube, local: NDArray[np.int64]) -> NDArray[np.int64]:
        """Convert (N, 3) local voxel indices of a cube to lattice-wide indices."""
        return np.asarray(local, dtype=np.int64) + np.asarray(cube.offset, dtype=np.int64)

    def voxel_centers_world(self, global_idx: NDArray[np.int64]) -> NDArray[np.float64]:
        """World centers of (N, 3) lattice-wide voxel indices."""
        return self.bbox_min + self.voxel_size * (np.asarray(global_idx, dtype=np.float64) + 0.5)


def _cubes_along(extent_voxels: int, s: int, stride: int) -> int:
    if extent_voxels <= s:
        return 1
    return math.ceil((extent_voxels - s) / stride) + 1


def build_lattice(bbox: BBox, voxel_size: float, s: int, stride: int) -> CubeLattice:
    """
    Divide a bounding box into overlapping cubes.

    Args:
        bbox: (x0, y0, z0, x1, y1, z1) world bounding box
        voxel_size: World units per voxel
        s: Voxels per cube side
        stride: Voxels between adjacent cube origins (stride < s overlaps cubes)

    Returns:
        CubeLattice with cubes in lexicographic (i, j, k) order

    Raises:
        InvalidConfigError: On nonpositive sizes, stride outside [1, s] or an empty bbox
    """
    if not voxel_size > 0:
        raise InvalidConfigError(f"voxel_size must be > 0, got {voxel_size}")
    if s < 2:
        raise InvalidConfigError(f"cube side must be >= 2, got {s}")
    if not 1 <= stride <= s:
        raise InvalidConfigError(f"stride must lie in [1, {s}], got {stride}")
    lo = np.asarray(bbox[:3], dtype=np.float64)
    hi = np.asarray(bbox[3:], dtype=np.float64)
    if lo.shape != (3,) or hi.shape != (3,) or not np.all(hi > lo):
        raise InvalidConfigError(f"bbox must have positive extent, got {bbox}")

    # Tolerance keeps exact multiples of voxel_size from gaining a voxel.
    extents = [max(1, math.ceil((h - l) / voxel_size - 1e-9)) for l, h in zip(lo, hi, strict=True)]
    counts = tuple(_cubes_along(e, s, stride) for e in extents)

    cubes = []
    for i, j, k in itertools.product(*(range(n) for n in counts)):
        offset = (i * stride, j * stride, k * stride)
        origin = lo + voxel_size * np.asarray(offset, dtype=np.float64)
        cubes.append(
            Cube(
                index=(i, j, k),
                origin=(float(origin[0]), float(origin[1]), float(origin[2])),
                voxel_size=float(voxel_size),
                s=s,
                offset=offset,
            )
        )

    logger.debug(f"Built lattice {counts} ({len(cubes)} cubes) over extents {extents} voxels")
    return CubeLattice(
        bbox=(float(lo[0]), float(lo[1]), float(lo[2]), float(hi[0]), float(hi[1]), float(hi[2])),
        voxel_size=float(voxel_size),
        s=s,
        stride=stride,
        counts=(counts[0], counts[1], counts[2]),
        cubes=tuple(cubes),
    )


def pair_angle(cube: Cube, view_i: CameraView, view_j: CameraView) -> float:
    """
    Angle between the projection rays of the cube center in two views.

    Returns:
        Angle in radians, in [0, pi]

    Raises:
        DegenerateRayError: If a camera center coincides with the cube center
    """
    target = cube.center()
    ray_i = target - view_i.center
    ray_j = target - view_j.center
    norm_i = float(np.linalg.norm(ray_i))
    norm_j = float(np.linalg.norm(ray_j))
    if norm_i < 1e-12 or norm_j < 1e-12:
        raise DegenerateRayError(f"Camera center coincides with center of cube {cube.index}")
    cosine = float(np.dot(ray_i, ray_j)) / (norm_i * norm_j)
    return float(np.arccos(np.clip(cosine, -1.0, 1.0)))
