"""
Scene file formats.

- Camera file: `# cameras <N>` followed by N blocks of three rows of four
  decimal floats, blocks separated by blank lines.
- Images: binary 8-bit PPM (P6).
- Scene manifest: key=value text (images, cameras, bbox, optional voxel_size
  and notes); relative paths are resolved against the manifest's directory.
- Reconstructions: PLY point clouds of voxel centers, written as ASCII and
  read in any PLY encoding, and occupancy grids
  (`occgrid nx ny nz [x0 y0 z0 voxel_size]` header + row-major 0/1 bytes).
"""

import io
import logging
import math
import re
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from plyfile import PlyData, PlyParseError
from pydantic import BaseModel, Field, ValidationError, field_validator

from voxmvs.core.exceptions import ParseError, SingularCameraError, UnsupportedFormatError
from voxmvs.stereo.binarize import SurfaceCube
from voxmvs.stereo.geometry import BBox, CameraView, CubeLattice, camera_center

logger = logging.getLogger(__name__)

CAMERA_HEADER = re.compile(r"^#\s*cameras\s+(\d+)\s*$")
OCCGRID_MAGIC = "occgrid"


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def dumps_cameras(matrices: Sequence[NDArray[np.float64]]) -> str:
    """Serialize 3x4 projection matrices to the camera text format."""
    blocks = []
    for matrix in matrices:
        rows = np.asarray(matrix, dtype=np.float64).reshape(3, 4)
        blocks.append("\n".join(" ".join(_fmt(v) for v in row) for row in rows))
    return f"# cameras {len(blocks)}\n" + "\n\n".join(blocks) + "\n"


def parse_cameras(text: str) -> list[NDArray[np.float64]]:
    """
    Parse the camera text format.

    Raises:
        ParseError: On a malformed header, row or block (message names the line)
        SingularCameraError: If a matrix has a singular left 3x3 block
    """
    lines = text.splitlines()
    header_line = next((n for n, line in enumerate(lines) if line.strip()), None)
    if header_line is None:
        raise ParseError("empty camera file", line=1)
    match = CAMERA_HEADER.match(lines[header_line].strip())
    if match is None:
        raise ParseError("expected '# cameras <N>' header", line=header_line + 1)
    expected = int(match.group(1))

    blocks: list[list[list[float]]] = []
    current: list[list[float]] = []
    block_start = 0
    for lineno, raw in enumerate(lines[header_line + 1 :], header_line + 2):
        line = raw.strip()
        if not line:
            if current:
                if len(current) != 3:
                    raise ParseError(
                        f"camera block has {len(current)} rows, expected 3", line=block_start
                    )
                blocks.append(current)
                current = []
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ParseError(f"expected 4 numbers, got {len(parts)}", line=lineno)
        try:
            row = [float(p) for p in parts]
        except ValueError as e:
            raise ParseError(f"invalid number: {e}", line=lineno) from e
        if not all(math.isfinite(v) for v in row):
            raise ParseError("camera values must be finite", line=lineno)
        if not current:
            block_start = lineno
        current.append(row)
        if len(current) > 3:
            raise ParseError("camera block has more than 3 rows", line=lineno)
    if current:
        if len(current) != 3:
            raise ParseError(f"camera block has {len(current)} rows, expected 3", line=block_start)
        blocks.append(current)

    if len(blocks) != expected:
        raise ParseError(
            f"header announces {expected} cameras, found {len(blocks)}", line=header_line + 1
        )

    matrices = []
    for number, block in enumerate(blocks):
        matrix = np.array(block, dtype=np.float64)
        try:
            camera_center(matrix)
        except SingularCameraError as e:
            raise SingularCameraError(f"camera {number}: {e}") from e
        matrices.append(matrix)
    return matrices


def load_cameras(path: Path) -> list[NDArray[np.float64]]:
    """Read a camera file."""
    return parse_cameras(Path(path).read_text(encoding="utf-8"))


def write_cameras(path: Path, matrices: Sequence[NDArray[np.float64]]) -> None:
    Path(path).write_text(dumps_cameras(matrices), encoding="utf-8")


def _ppm_header(data: bytes) -> tuple[list[bytes], int]:
    """Read the four PPM header tokens, skipping comments."""
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise ParseError("truncated PPM header")
        if data[pos : pos + 1] == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        tokens.append(data[start:pos])
    # Exactly one whitespace byte separates the header from the raster.
    return tokens, pos + 1


def decode_ppm(data: bytes) -> NDArray[np.uint8]:
    """
    Decode a binary 8-bit PPM image.

    Returns:
        (H, W, 3) uint8 array

    Raises:
        UnsupportedFormatError: For ASCII or 16-bit PPM and other netpbm variants
        ParseError: For malformed headers or truncated pixel data
    """
    magic = data[:2]
    if magic != b"P6":
        if len(magic) == 2 and magic[:1] == b"P" and magic[1:].isdigit():
            raise UnsupportedFormatError(f"Only binary PPM (P6) is supported, got {magic.decode()}")
        raise ParseError("not a PPM file")

    tokens, offset = _ppm_header(data)
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError as e:
        raise ParseError(f"invalid PPM header: {e}") from e
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise ParseError(f"invalid PPM dimensions {width}x{height} maxval {maxval}")
    if maxval > 255:
        raise UnsupportedFormatError(f"Only 8-bit PPM is supported, got maxval {maxval}")

    size = width * height * 3
    raster = data[offset : offset + size]
    if len(raster) < size:
        raise ParseError(f"truncated PPM payload: expected {size} bytes, got {len(raster)}")
    image = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3)
    if maxval != 255:
        image = np.round(image.astype(np.float64) * (255.0 / maxval)).astype(np.uint8)
    return image.copy()


def encode_ppm(image: NDArray[np.uint8]) -> bytes:
    """Encode an (H, W, 3) uint8 image as binary PPM."""
    image = np.ascontiguousarray(image, dtype=np.uint8)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"image must be HxWx3, got {image.shape}")
    height, width = image.shape[:2]
    return f"P6\n{width} {height}\n255\n".encode("ascii") + image.tobytes()


def load_image(path: Path) -> NDArray[np.uint8]:
    return decode_ppm(Path(path).read_bytes())


def write_image(path: Path, image: NDArray[np.uint8]) -> None:
    Path(path).write_bytes(encode_ppm(image))


class SceneManifest(BaseModel):
    """Where a scene's images and cameras live, and the volume to reconstruct."""

    image_paths: list[Path] = Field(..., description="One PPM image per camera, in camera order")
    camera_file_path: Path = Field(..., description="Camera text file")
    bbox: tuple[float, float, float, float, float, float] = Field(
        ..., description="x0 y0 z0 x1 y1 z1"
    )
    notes: str = Field(default="", description="Free text")
    voxel_size: float | None = Field(default=None, description="Suggested voxel size")

    @field_validator("image_paths")
    @classmethod
    def validate_images(cls, v: list[Path]) -> list[Path]:
        """A scene needs at least two views."""
        if len(v) < 2:
            raise ValueError(f"a scene needs at least 2 images, got {len(v)}")
        return v

    @field_validator("bbox")
    @classmethod
    def validate_bbox(cls, v: BBox) -> BBox:
        """Validate bounding box extent."""
        if not all(hi > lo for lo, hi in zip(v[:3], v[3:], strict=True)):
            raise ValueError(f"bbox must have positive extent, got {v}")
        return v

    @field_validator("voxel_size")
    @classmethod
    def validate_voxel_size(cls, v: float | None) -> float | None:
        """Validate voxel size."""
        if v is not None and not v > 0:
            raise ValueError(f"voxel_size must be > 0, got {v}")
        return v


def parse_manifest(text: str, base_dir: Path) -> SceneManifest:
    """
    Parse manifest text, resolving relative paths against base_dir.

    Raises:
        ParseError: On malformed lines, unknown or missing keys, or invalid values
    """
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"expected key=value, got {raw!r}", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in ("images", "cameras", "bbox", "notes", "voxel_size"):
            raise ParseError(f"unknown manifest key {key!r}", line=lineno)
        if key in values:
            raise ParseError(f"duplicate manifest key {key!r}", line=lineno)
        values[key] = value

    missing = [key for key in ("images", "cameras", "bbox") if key not in values]
    if missing:
        raise ParseError(f"manifest is missing {', '.join(missing)}")

    try:
        bbox_values = [float(v) for v in values["bbox"].split()]
        voxel_size = float(values["voxel_size"]) if "voxel_size" in values else None
    except ValueError as e:
        raise ParseError(f"invalid number in manifest: {e}") from e
    if len(bbox_values) != 6:
        raise ParseError(f"bbox needs 6 values, got {len(bbox_values)}")

    try:
        return SceneManifest(
            image_paths=[base_dir / p for p in values["images"].split()],
            camera_file_path=base_dir / values["cameras"],
            bbox=tuple(bbox_values),
            notes=values.get("notes", ""),
            voxel_size=voxel_size,
        )
    except ValidationError as e:
        raise ParseError(f"invalid manifest: {e}") from e


def load_manifest(path: Path) -> SceneManifest:
    path = Path(path)
    return parse_manifest(path.read_text(encoding="utf-8"), path.parent)


def dumps_manifest(manifest: SceneManifest, base_dir: Path | None = None) -> str:
    """Emit manifest text; paths under base_dir are written relative to it."""

    def rel(p: Path) -> str:
        if base_dir is not None:
            try:
                return p.relative_to(base_dir).as_posix()
            except ValueError:
                pass
        return p.as_posix()

    lines = [
        "images=" + " ".join(rel(p) for p in manifest.image_paths),
        f"cameras={rel(manifest.camera_file_path)}",
        "bbox=" + " ".join(_fmt(v) for v in manifest.bbox),
    ]
    if manifest.voxel_size is not None:
        lines.append(f"voxel_size={_fmt(manifest.voxel_size)}")
    if manifest.notes:
        lines.append(f"notes={manifest.notes}")
    return "\n".join(lines) + "\n"


def write_manifest(path: Path, manifest: SceneManifest) -> None:
    path = Path(path)
    path.write_text(dumps_manifest(manifest, path.parent), encoding="utf-8")


@dataclass(frozen=True, eq=False)
class Scene:
    """A loaded scene: its manifest and calibrated views (ids follow image order)."""

    manifest: SceneManifest
    views: tuple[CameraView, ...]


def load_views(manifest: SceneManifest) -> tuple[CameraView, ...]:
    """
    Load every image and camera a manifest names.

    Raises:
        ParseError: If image and camera counts differ, or a file is malformed
        UnsupportedFormatError: For non-P6 images
        SingularCameraError: For degenerate camera matrices
    """
    matrices = load_cameras(manifest.camera_file_path)
    if len(matrices) != len(manifest.image_paths):
        raise ParseError(
            f"manifest lists {len(manifest.image_paths)} images but {len(matrices)} cameras"
        )
    return tuple(
        CameraView(id=n, image=load_image(image_path), proj=matrix)
        for n, (image_path, matrix) in enumerate(zip(manifest.image_paths, matrices, strict=True))
    )


def load_scene(manifest_path: Path) -> Scene:
    """Load a manifest and the views it names (view ids follow image order)."""
    manifest = load_manifest(manifest_path)
    views = load_views(manifest)
    logger.info(f"Loaded scene {manifest_path} with {len(views)} views")
    return Scene(manifest=manifest, views=views)


def surface_voxel_indices(
    surface_cubes: Sequence[SurfaceCube], lattice: CubeLattice
) -> NDArray[np.int64]:
    """Deduplicated lattice-wide indices of all occupied voxels, sorted lexicographically."""
    chunks = [
        lattice.global_voxel_indices(lattice.cube(surf.cube_index), np.argwhere(surf.occ))
        for surf in surface_cubes
        if np.any(surf.occ)
    ]
    if not chunks:
        return np.zeros((0, 3), dtype=np.int64)
    return np.unique(np.concatenate(chunks), axis=0)


def dumps_ply(points: NDArray[np.float64]) -> bytes:
    """ASCII PLY with one vertex per row of points."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    header = [
        "ply",
        "format ascii 1.0",
        "comment voxmvs surface voxels",
        f"element vertex {points.shape[0]}",
        "property double x",
        "property double y",
        "property double z",
        "end_header",
    ]
    body = [" ".join(_fmt(c) for c in point) for point in points]
    return ("\n".join(header + body) + "\n").encode("ascii")


def write_ply(surface_cubes: Sequence[SurfaceCube], lattice: CubeLattice) -> bytes:
    """
    Point cloud of the occupied voxel centers.

    Voxels occupied in several overlapping cubes are emitted once; vertices are
    sorted by (x, y, z).
    """
    indices = surface_voxel_indices(surface_cubes, lattice)
    return dumps_ply(lattice.voxel_centers_world(indices))


def parse_ply(data: bytes) -> NDArray[np.float64]:
    """
    Read the vertex positions of a PLY file (ASCII or binary).

    Raises:
        ParseError: For malformed files or a vertex element without x, y and z
    """
    try:
        vertex = PlyData.read(io.BytesIO(data))["vertex"]
        points = np.stack([vertex["x"], vertex["y"], vertex["z"]], axis=-1)
    except PlyParseError as e:
        raise ParseError(f"malformed PLY: {e}") from e
    except (KeyError, ValueError) as e:
        raise ParseError(f"PLY has no vertex x, y and z: {e}") from e
    return np.asarray(points, dtype=np.float64).reshape(-1, 3)


def read_ply(path: Path) -> NDArray[np.float64]:
    return parse_ply(Path(path).read_bytes())


@dataclass(frozen=True, eq=False)
class OccGrid:
    """Dense boolean occupancy grid, optionally placed in world space."""

    occ: NDArray[np.bool_]
    origin: tuple[float, float, float] | None = None
    voxel_size: float | None = None

    def points(self) -> NDArray[np.float64]:
        """World centers of the occupied voxels."""
        if self.origin is None or self.voxel_size is None:
            raise ValueError("occupancy grid has no world placement")
        idx = np.argwhere(self.occ).astype(np.float64)
        return np.asarray(self.origin) + self.voxel_size * (idx + 0.5)


def dumps_occgrid(grid: OccGrid) -> bytes:
    """Serialize an occupancy grid (header line + row-major 0/1 bytes)."""
    nx, ny, nz = grid.occ.shape
    header = f"{OCCGRID_MAGIC} {nx} {ny} {nz}"
    if grid.origin is not None and grid.voxel_size is not None:
        header += " " + " ".join(_fmt(v) for v in (*grid.origin, grid.voxel_size))
    payload = np.ascontiguousarray(grid.occ, dtype=np.uint8).tobytes()
    return (header + "\n").encode("ascii") + payload


def parse_occgrid(data: bytes) -> OccGrid:
    """
    Parse an occupancy grid.

    Raises:
        ParseError: On a malformed header, truncated payload or bytes other than 0/1
    """
    newline = data.find(b"\n")
    if newline < 0:
        raise ParseError("missing occgrid header", line=1)
    parts = data[:newline].decode("ascii", errors="replace").split()
    if not parts or parts[0] != OCCGRID_MAGIC or len(parts) not in (4, 8):
        raise ParseError("expected 'occgrid nx ny nz [x0 y0 z0 voxel_size]'", line=1)
    try:
        nx, ny, nz = (int(p) for p in parts[1:4])
        placement = [float(p) for p in parts[4:]]
    except ValueError as e:
        raise ParseError(f"invalid occgrid header: {e}", line=1) from e
    if min(nx, ny, nz) < 0:
        raise ParseError("occgrid dimensions must be non-negative", line=1)

    size = nx * ny * nz
    payload = data[newline + 1 :]
    if len(payload) != size:
        raise ParseError(f"occgrid payload has {len(payload)} bytes, expected {size}")
    raw = np.frombuffer(payload, dtype=np.uint8)
    if np.any(raw > 1):
        raise ParseError("occgrid payload must hold only 0 and 1 bytes")
    occ = raw.astype(bool).reshape(nx, ny, nz)
    if placement:
        x0, y0, z0, voxel_size = placement
        return OccGrid(occ=occ, origin=(x0, y0, z0), voxel_size=voxel_size)
    return OccGrid(occ=occ)


def write_occgrid(path: Path, grid: OccGrid) -> None:
    Path(path).write_bytes(dumps_occgrid(grid))


def read_occgrid(path: Path) -> OccGrid:
    return parse_occgrid(Path(path).read_bytes())


def lattice_occgrid(surface_cubes: Sequence[SurfaceCube], lattice: CubeLattice) -> OccGrid:
    """Occupancy of the whole lattice, placed at the bounding-box corner."""
    occ = np.zeros(lattice.voxel_dims, dtype=bool)
    indices = surface_voxel_indices(surface_cubes, lattice)
    if indices.size:
        occ[indices[:, 0], indices[:, 1], indices[:, 2]] = True
    x0, y0, z0 = (float(v) for v in lattice.bbox_min)
    return OccGrid(occ=occ, origin=(x0, y0, z0), voxel_size=lattice.voxel_size)
