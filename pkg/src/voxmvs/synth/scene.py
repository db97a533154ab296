"""
Synthetic calibrated scenes with exact ground truth.

A textured sphere or box is ray cast from a ring of pinhole cameras aimed at
its center. By default the ring is made of narrow-baseline stereo pairs
spread evenly in azimuth. Shading is Lambertian under one fixed directional
light plus an ambient term. The albedo is 3D value noise drawn from the
shape's texture seed: a coarse octave that survives the block pooling of the
patch descriptor, and a fine octave a few voxels across that the correlation
window resolves. Projection matrices are exact by construction and the
ground-truth surface voxels are taken from the analytic surface.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
from numpy.typing import NDArray
from scipy.ndimage import map_coordinates

from voxmvs.core.exceptions import InvalidRigError
from voxmvs.scene_io import (
    OccGrid,
    SceneManifest,
    write_cameras,
    write_image,
    write_manifest,
    write_occgrid,
)
from voxmvs.stereo.geometry import BBox, CameraView

logger = logging.getLogger(__name__)

AMBIENT = 0.6
LIGHT_DIRECTION = np.array([0.3, 0.2, 1.0]) / np.linalg.norm([0.3, 0.2, 1.0])
BACKGROUND = 0.25
BBOX_MARGIN_VOXELS = 4
TEXTURE_CELL_VOXELS = 2.5
TEXTURE_COARSE_CELL_VOXELS = 8.0
TEXTURE_CONTRAST = 1.5
DEFAULT_VOXELS_ACROSS = 64

MANIFEST_NAME = "scene.txt"
CAMERAS_NAME = "cameras.txt"
GROUND_TRUTH_NAME = "gt.occ"


@dataclass(frozen=True)
class ShapeSpec:
    """Analytic test shape."""

    kind: Literal["sphere", "box"] = "sphere"
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float = 1.0
    half_extents: tuple[float, float, float] = (0.8, 0.6, 0.7)
    texture_seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("sphere", "box"):
            raise InvalidRigError(f"Unknown shape kind '{self.kind}'")
        if self.kind == "sphere" and not self.radius > 0:
            raise InvalidRigError(f"Sphere radius must be > 0, got {self.radius}")
        if self.kind == "box" and not all(h > 0 for h in self.half_extents):
            raise InvalidRigError(f"Box half extents must be > 0, got {self.half_extents}")

    @property
    def bounding_radius(self) -> float:
        """Radius of the smallest sphere around the center containing the shape."""
        if self.kind == "sphere":
            return self.radius
        return float(np.linalg.norm(self.half_extents))

    @property
    def half_size(self) -> NDArray[np.float64]:
        """Half extents of the shape's axis-aligned bounds."""
        if self.kind == "sphere":
            return np.full(3, self.radius)
        return np.asarray(self.half_extents, dtype=np.float64)

    @property
    def diameter(self) -> float:
        """Largest axis-aligned extent."""
        return float(2.0 * self.half_size.max())


@dataclass(frozen=True)
class RigSpec:
    """
    Ring of cameras around the shape center.

    With a positive pair baseline the cameras are grouped in stereo pairs,
    pair_baseline_deg apart in azimuth, and the pairs are spread evenly around
    the ring; an odd camera out sits alone at the last station. A baseline of
    0 spaces all cameras evenly.
    """

    n_views: int = 8
    distance: float | None = None
    elevation_deg: float = 10.0
    fov_deg: float = 40.0
    image_size: int = 256
    pair_baseline_deg: float = 12.0

    def resolved_distance(self, shape: ShapeSpec) -> float:
        """Camera distance from the shape center (defaults to 4.5 bounding radii)."""
        return self.distance if self.distance is not None else 4.5 * shape.bounding_radius

    def azimuths(self) -> list[float]:
        """Camera azimuths in radians, in view order."""
        if self.pair_baseline_deg == 0.0:
            return [2.0 * math.pi * n / self.n_views for n in range(self.n_views)]

        stations = (self.n_views + 1) // 2
        half = math.radians(self.pair_baseline_deg) / 2.0
        azimuths = []
        for n in range(self.n_views):
            station, side = divmod(n, 2)
            center = 2.0 * math.pi * station / stations
            alone = self.n_views % 2 == 1 and station == stations - 1
            azimuths.append(center if alone else center + (half if side else -half))
        return azimuths


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    """Rendered views plus the ground truth they were rendered from."""

    views: tuple[CameraView, ...]
    gt_occ: OccGrid
    shape_spec: ShapeSpec
    rig: RigSpec
    bbox: BBox
    voxel_size: float
    notes: str = field(default="")

    def gt_points(self) -> NDArray[np.float64]:
        return self.gt_occ.points()


def look_at_projection(
    eye: NDArray[np.float64],
    target: NDArray[np.float64],
    image_size: int,
    fov_deg: float,
) -> NDArray[np.float64]:
    """
    Projection matrix K [R | -R eye] of a square pinhole camera looking at target.

    Camera axes are right, down and forward; world +z is up. The principal
    point sits at the image center ((W-1)/2, (H-1)/2).
    """
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.array([0.0, 0.0, 1.0]))
    if np.linalg.norm(right) < 1e-9:
        raise InvalidRigError("Camera looks straight along the up axis")
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward])

    focal = (image_size / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
    principal = (image_size - 1) / 2.0
    intrinsics = np.array([[focal, 0.0, principal], [0.0, focal, principal], [0.0, 0.0, 1.0]])
    return intrinsics @ np.hstack([rotation, (-rotation @ eye)[:, None]])


def rig_projections(shape: ShapeSpec, rig: RigSpec) -> list[NDArray[np.float64]]:
    """
    Projection matrices of the camera ring.

    Raises:
        InvalidRigError: If the rig has fewer than 2 cameras or bad optics
    """
    if rig.n_views < 2:
        raise InvalidRigError(f"A rig needs at least 2 cameras, got {rig.n_views}")
    if rig.image_size < 2 or not 0.0 < rig.fov_deg < 180.0:
        raise InvalidRigError(f"Invalid optics: image_size={rig.image_size} fov={rig.fov_deg}")
    stations = (rig.n_views + 1) // 2
    if not 0.0 <= rig.pair_baseline_deg < 360.0 / stations:
        raise InvalidRigError(
            f"Pair baseline {rig.pair_baseline_deg} must lie in [0, {360.0 / stations})"
        )
    distance = rig.resolved_distance(shape)
    if not distance > shape.bounding_radius:
        raise InvalidRigError(f"Cameras at distance {distance} would sit inside the shape")

    center = np.asarray(shape.center, dtype=np.float64)
    elevation = math.radians(rig.elevation_deg)
    projections = []
    for azimuth in rig.azimuths():
        offset = np.array(
            [
                math.cos(elevation) * math.cos(azimuth),
                math.cos(elevation) * math.sin(azimuth),
                math.sin(elevation),
            ]
        )
        eye = center + distance * offset
        projections.append(look_at_projection(eye, center, rig.image_size, rig.fov_deg))
    return projections


def pixel_rays(
    proj: NDArray[np.float64], image_size: int
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """
    Unit world-space ray directions through every pixel center.

    Returns:
        (origin, directions): camera center and an (H, W, 3) direction array
    """
    m = proj[:, :3]
    origin = -np.linalg.solve(m, proj[:, 3])
    coords = np.arange(image_size, dtype=np.float64)
    cols, rows = np.meshgrid(coords, coords)
    pixels = np.stack([cols, rows, np.ones_like(cols)], axis=-1)
    directions = pixels @ np.linalg.inv(m).T
    directions /= np.linalg.norm(directions, axis=-1, keepdims=True)
    return origin, directions


def intersect(
    shape: ShapeSpec, origin: NDArray[np.float64], directions: NDArray[np.float64]
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """
    First hit of unit rays with the shape.

    Returns:
        (t, normals): hit distances (inf on a miss) and unit outward normals
    """
    center = np.asarray(shape.center, dtype=np.float64)
    dirs = np.asarray(directions, dtype=np.float64)
    oc = np.asarray(origin, dtype=np.float64) - center

    if shape.kind == "sphere":
        b = dirs @ oc
        disc = b * b - (oc @ oc - shape.radius**2)
        root = np.sqrt(np.maximum(disc, 0.0))
        t = np.where(disc >= 0.0, -b - root, np.inf)
        t = np.where(t > 0.0, t, np.inf)
        hit = np.asarray(origin) + np.where(np.isfinite(t), t, 0.0)[..., None] * dirs
        normals = (hit - center) / shape.radius
        return t, normals

    half = np.asarray(shape.half_extents, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t1 = (-half - oc) * inv
        t2 = (half - oc) * inv
    t_near = np.nanmax(np.minimum(t1, t2), axis=-1)
    t_far = np.nanmin(np.maximum(t1, t2), axis=-1)
    t = np.where((t_far >= np.maximum(t_near, 0.0)) & (t_near > 0.0), t_near, np.inf)
    local = oc + np.where(np.isfinite(t), t, 0.0)[..., None] * dirs
    axis = np.argmax(np.abs(local) / half, axis=-1)
    normals = np.zeros_like(local)
    signs = np.sign(np.take_along_axis(local, axis[..., None], -1))
    np.put_along_axis(normals, axis[..., None], signs, -1)
    return t, normals


class ValueNoise:
    """
    Two-octave RGB value noise on lattices covering the shape.

    Both octaves are trilinearly interpolated from uniform node values and
    averaged with equal weight; the mix is then stretched around 0.5 by the
    contrast factor and clipped to [0, 1].
    """

    def __init__(
        self,
        shape: ShapeSpec,
        cell: float,
        coarse_cell: float,
        contrast: float = TEXTURE_CONTRAST,
    ) -> None:
        if not 0.0 < cell <= coarse_cell:
            raise ValueError(f"Need 0 < cell <= coarse_cell, got {cell} and {coarse_cell}")
        rng = np.random.default_rng(shape.texture_seed)
        self.lo = np.asarray(shape.center) - shape.half_size - 2.0 * coarse_cell
        self.cells = (coarse_cell, cell)
        self.contrast = contrast
        extent = 2.0 * shape.half_size + 4.0 * coarse_cell
        self.octaves = [
            rng.random((3, *(np.ceil(extent / size).astype(int) + 2))) for size in self.cells
        ]

    def __call__(self, points: NDArray[np.float64]) -> NDArray[np.float64]:
        """Albedo in [0, 1] for (N, 3) world points, as an (N, 3) RGB array."""
        rel = (np.asarray(points, dtype=np.float64) - self.lo).T
        mix = np.zeros((points.shape[0], 3))
        for nodes, size in zip(self.octaves, self.cells, strict=True):
            for channel in range(3):
                mix[:, channel] += map_coordinates(
                    nodes[channel], rel / size, order=1, mode="nearest"
                )
        mix /= len(self.octaves)
        return np.clip(0.5 + self.contrast * (mix - 0.5), 0.0, 1.0)


def render_view(
    shape: ShapeSpec, proj: NDArray[np.float64], image_size: int, texture: ValueNoise
) -> NDArray[np.uint8]:
    """Ray cast one (image_size x image_size) RGB view."""
    origin, directions = pixel_rays(proj, image_size)
    t, normals = intersect(shape, origin, directions)
    hit = np.isfinite(t)

    image = np.full((image_size, image_size, 3), BACKGROUND)
    points = origin + t[hit][:, None] * directions[hit]
    shade = AMBIENT + (1.0 - AMBIENT) * np.maximum(normals[hit] @ LIGHT_DIRECTION, 0.0)
    albedo = 0.15 + 0.85 * texture(points)
    image[hit] = shade[:, None] * albedo
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def surface_distance(shape: ShapeSpec, points: NDArray[np.float64]) -> NDArray[np.float64]:
    """Absolute distance from (N, 3) points to the analytic surface."""
    rel = np.asarray(points, dtype=np.float64) - np.asarray(shape.center)
    if shape.kind == "sphere":
        return np.abs(np.linalg.norm(rel, axis=-1) - shape.radius)
    q = np.abs(rel) - np.asarray(shape.half_extents)
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
    inside = np.minimum(q.max(axis=-1), 0.0)
    return np.abs(outside + inside)


def scene_bounds(shape: ShapeSpec, voxel_size: float) -> BBox:
    """Shape bounds grown by a margin of a few voxels."""
    lo = np.asarray(shape.center) - shape.half_size - BBOX_MARGIN_VOXELS * voxel_size
    hi = np.asarray(shape.center) + shape.half_size + BBOX_MARGIN_VOXELS * voxel_size
    return (float(lo[0]), float(lo[1]), float(lo[2]), float(hi[0]), float(hi[1]), float(hi[2]))


def ground_truth(shape: ShapeSpec, bbox: BBox, voxel_size: float) -> OccGrid:
    """Voxels whose centers lie within half a voxel diagonal of the surface."""
    lo = np.asarray(bbox[:3])
    dims = [
        max(1, math.ceil((hi - lo_a) / voxel_size - 1e-9))
        for lo_a, hi in zip(bbox[:3], bbox[3:], strict=True)
    ]
    axes = [lo[a] + voxel_size * (np.arange(dims[a]) + 0.5) for a in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    dist = surface_distance(shape, grid.reshape(-1, 3)).reshape(dims)
    occ = dist <= math.sqrt(3.0) / 2.0 * voxel_size
    origin = (float(lo[0]), float(lo[1]), float(lo[2]))
    return OccGrid(occ=occ, origin=origin, voxel_size=voxel_size)


def generate_scene(
    shape: ShapeSpec,
    rig: RigSpec,
    voxels_across: int = DEFAULT_VOXELS_ACROSS,
    workers: int = 1,
) -> SyntheticScene:
    """
    Render a synthetic scene.

    Args:
        shape: Shape and texture seed
        rig: Camera ring
        voxels_across: Voxels spanned by the shape's largest extent
        workers: Threads used to render the views

    Raises:
        InvalidRigError: For rigs with fewer than 2 cameras or invalid optics
    """
    projections = rig_projections(shape, rig)
    voxel_size = shape.diameter / voxels_across
    texture = ValueNoise(
        shape, TEXTURE_CELL_VOXELS * voxel_size, TEXTURE_COARSE_CELL_VOXELS * voxel_size
    )

    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        images = list(
            executor.map(
                lambda proj: render_view(shape, proj, rig.image_size, texture), projections
            )
        )

    views = tuple(
        CameraView(id=n, image=image, proj=proj)
        for n, (image, proj) in enumerate(zip(images, projections, strict=True))
    )
    bbox = scene_bounds(shape, voxel_size)
    gt = ground_truth(shape, bbox, voxel_size)
    logger.info(
        f"Rendered {shape.kind} scene: {len(views)} views of {rig.image_size}px, "
        f"{int(gt.occ.sum())} ground-truth voxels of size {voxel_size:.6g}"
    )
    return SyntheticScene(
        views=views,
        gt_occ=gt,
        shape_spec=shape,
        rig=rig,
        bbox=bbox,
        voxel_size=voxel_size,
        notes=f"synthetic {shape.kind} texture_seed={shape.texture_seed} views={rig.n_views}",
    )


def save_scene(scene: SyntheticScene, out_dir: Path) -> Path:
    """
    Write the scene as view_###.ppm files, a camera file, a manifest and gt.occ.

    Returns:
        Path of the written manifest
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    image_paths = []
    for view in scene.views:
        image_path = out_dir / f"view_{view.id:03d}.ppm"
        write_image(image_path, view.image)
        image_paths.append(image_path)

    write_cameras(out_dir / CAMERAS_NAME, [view.proj for view in scene.views])
    write_occgrid(out_dir / GROUND_TRUTH_NAME, scene.gt_occ)

    manifest = SceneManifest(
        image_paths=image_paths,
        camera_file_path=out_dir / CAMERAS_NAME,
        bbox=scene.bbox,
        notes=scene.notes,
        voxel_size=scene.voxel_size,
    )
    manifest_path = out_dir / MANIFEST_NAME
    write_manifest(manifest_path, manifest)
    logger.info(f"Saved synthetic scene to {out_dir}")
    return manifest_path
