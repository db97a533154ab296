"""Exceptions raised by the reconstruction engine."""


class VoxError(Exception):
    """Base class for all engine errors."""


class InvalidConfigError(VoxError):
    """Raised when a configuration value or lattice parameter is invalid."""


class SingularCameraError(VoxError):
    """Raised when the left 3x3 block of a projection matrix is singular."""


class DegenerateRayError(VoxError):
    """Raised when a projection ray has (numerically) zero length."""


class CubeMismatchError(VoxError):
    """Raised when two per-cube quantities belong to different cubes."""


class ShapeMismatchError(VoxError):
    """Raised when volumes that must share a cube geometry do not."""


class UnknownPredictorError(VoxError):
    """Raised when a predictor kind is not registered."""


class EmptyInputError(VoxError):
    """Raised when an operation needs at least one input element."""


class SingleClassError(VoxError):
    """Raised when a classifier is fitted on data holding a single class."""


class ZeroWeightSumError(VoxError):
    """Raised when fusion weights sum to zero."""


class TooFewViewsError(VoxError):
    """Raised when fewer than two views are available."""


class NoViewsError(VoxError):
    """Raised when ray pooling is asked to run without any view."""


class InvalidCandidatesError(VoxError):
    """Raised when the threshold candidate grid is empty, unsorted or out of range."""


class ParseError(VoxError):
    """Raised when a scene file cannot be parsed."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedFormatError(VoxError):
    """Raised for image encodings other than binary 8-bit PPM."""


class InvalidRigError(VoxError):
    """Raised when a synthetic camera rig cannot be built."""


class EmptyGroundTruthError(VoxError):
    """Raised when evaluation is asked to score against an empty ground truth."""


class CubeProcessingError(VoxError):
    """Raised by the pipeline when processing a single cube fails."""

    def __init__(self, cube_index: tuple[int, int, int], cause: Exception) -> None:
        self.cube_index = cube_index
        super().__init__(f"cube {cube_index}: {cause}")
