"""
Configuration models for voxmvs.

Defines the pydantic models for logging (config/logging.toml) and for the
reconstruction pipeline. Pipeline configuration files are either plain
key=value text or TOML with a [pipeline] section; unknown keys are rejected.
"""

from pathlib import Path
from typing import Any, Literal

import numpy as np
import toml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from voxmvs.core.exceptions import InvalidConfigError


class LoggingConfig(BaseModel):
    """Logging configuration model."""

    level: str = Field(
        default="INFO", description="Log level (DEBUG, INFO, WARNING, ERROR, CRITICAL)"
    )
    output: str = Field(default="console", description="Output mode (console, file, both)")
    file_path: str = Field(default="logs/voxmvs.log", description="Log file path")
    max_bytes: int = Field(
        default=10485760, description="Max log file size before rotation (bytes)"
    )
    backup_count: int = Field(default=5, description="Number of backup log files to keep")
    include_timestamp: bool = Field(default=True, description="Include timestamps in log messages")
    timestamp_format: str = Field(default="[%Y-%m-%d %H:%M:%S]", description="Timestamp format")
    include_level: bool = Field(default=True, description="Include log level in messages")
    include_name: bool = Field(default=False, description="Include logger name in messages")
    rich_formatting: bool = Field(
        default=True, description="Use Rich formatting for console output"
    )
    rich_tracebacks: bool = Field(default=True, description="Show full tracebacks for exceptions")

    @field_validator("level")
    @classmethod
    def validate_level(cls, v: str) -> str:
        """Validate log level."""
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        v_upper = v.upper()
        if v_upper not in valid_levels:
            raise ValueError(f"Invalid log level: {v}. Must be one of {valid_levels}")
        return v_upper

    @field_validator("output")
    @classmethod
    def validate_output(cls, v: str) -> str:
        """Validate output mode."""
        valid_outputs = ["console", "file", "both"]
        v_lower = v.lower()
        if v_lower not in valid_outputs:
            raise ValueError(f"Invalid output mode: {v}. Must be one of {valid_outputs}")
        return v_lower


class PredictorSpec(BaseModel):
    """Which surface predictor to run and how."""

    model_config = ConfigDict(frozen=True)

    kind: str = Field(default="zncc", description="Registered predictor name")
    window: int = Field(default=3, description="Odd neighborhood side K")
    sharpness: float = Field(default=2.0, description="Exponent applied to the [0,1] score")

    @field_validator("window")
    @classmethod
    def validate_window(cls, v: int) -> int:
        """Validate window size."""
        if v < 1 or v % 2 == 0:
            raise ValueError(f"window must be an odd integer >= 1, got {v}")
        return v

    @field_validator("sharpness")
    @classmethod
    def validate_sharpness(cls, v: float) -> float:
        """Validate sharpness exponent."""
        if not v > 0:
            raise ValueError(f"sharpness must be > 0, got {v}")
        return v


class PipelineConfig(BaseModel):
    """Reconstruction pipeline configuration model."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    cube_size: int = Field(default=32, description="Voxels per cube side (s)")
    stride: int = Field(default=16, description="Voxels between adjacent cube origins")
    voxel_size: float | None = Field(
        default=None, description="World units per voxel; falls back to the scene manifest"
    )
    gamma: float = Field(default=0.8, description="Fraction of views that must vote for a voxel")
    tau: float = Field(default=0.7, description="Fixed binarization threshold")
    adaptive: bool = Field(default=False, description="Optimize a threshold per cube")
    beta: float = Field(default=6.0, description="Reward for surface voxels shared by neighbors")
    n_v: int = Field(default=5, description="View pairs kept per cube")
    n_min: int = Field(default=3, description="Gate-passing pairs required to process a cube")
    predictor: str = Field(default="zncc", description="Registered predictor name")
    window: int = Field(default=3, description="Predictor neighborhood side")
    sharpness: float = Field(default=2.0, description="Predictor sharpening exponent")
    weight_mode: Literal["heuristic", "net", "uniform"] = Field(
        default="heuristic", description="How view pairs are scored"
    )
    weight_net_path: str | None = Field(default=None, description="Fitted weight network file")
    gate_path: str | None = Field(default=None, description="Fitted cube gate file")
    thinning: bool = Field(default=False, description="Thin the binarized surface")
    thread_count: int = Field(default=1, description="Worker threads for cube processing")
    seed: int = Field(default=0, description="Seed for every randomized step")
    tau_candidates: int = Field(default=50, description="Size of the adaptive threshold grid")
    tau_min: float = Field(default=0.5, description="Smallest adaptive threshold candidate")
    tau_max: float = Field(default=0.99, description="Largest adaptive threshold candidate")
    max_sweeps: int = Field(default=10, description="Sweep limit for threshold optimization")

    @field_validator("gamma")
    @classmethod
    def validate_gamma(cls, v: float) -> float:
        """Validate vote fraction."""
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {v}")
        return v

    @field_validator("tau")
    @classmethod
    def validate_tau(cls, v: float) -> float:
        """Validate threshold."""
        if not 0.0 <= v < 1.0:
            raise ValueError(f"tau must lie in [0, 1), got {v}")
        return v

    @field_validator("cube_size", "stride", "n_v", "thread_count", "tau_candidates", "max_sweeps")
    @classmethod
    def validate_positive(cls, v: int) -> int:
        """Validate counts."""
        if v < 1:
            raise ValueError(f"value must be >= 1, got {v}")
        return v

    @field_validator("n_min")
    @classmethod
    def validate_n_min(cls, v: int) -> int:
        """Validate gate count."""
        if v < 0:
            raise ValueError(f"n_min must be >= 0, got {v}")
        return v

    @field_validator("voxel_size")
    @classmethod
    def validate_voxel_size(cls, v: float | None) -> float | None:
        """Validate voxel size."""
        if v is not None and not v > 0:
            raise ValueError(f"voxel_size must be > 0, got {v}")
        return v

    @model_validator(mode="after")
    def validate_combinations(self) -> "PipelineConfig":
        """Validate cross-field constraints."""
        if self.cube_size < 2:
            raise ValueError("cube_size must be >= 2")
        if self.stride > self.cube_size:
            raise ValueError("stride must not exceed cube_size")
        if not 0.5 <= self.tau_min <= self.tau_max < 1.0:
            raise ValueError("threshold grid must satisfy 0.5 <= tau_min <= tau_max < 1")
        if self.weight_mode == "net" and not self.weight_net_path:
            raise ValueError("weight_mode 'net' requires weight_net_path")
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError(f"window must be an odd integer >= 1, got {self.window}")
        if not self.sharpness > 0:
            raise ValueError(f"sharpness must be > 0, got {self.sharpness}")
        return self

    def predictor_spec(self) -> PredictorSpec:
        """Return the predictor part of the configuration."""
        return PredictorSpec(kind=self.predictor, window=self.window, sharpness=self.sharpness)

    def candidate_grid(self) -> list[float]:
        """Return the ascending adaptive-threshold candidates."""
        if self.tau_candidates == 1:
            return [self.tau_min]
        grid = np.linspace(self.tau_min, self.tau_max, self.tau_candidates)
        return [float(t) for t in grid]

    def to_text(self) -> str:
        """Emit the configuration as key=value lines (unset optional fields omitted)."""
        lines = []
        for name in type(self).model_fields:
            value = getattr(self, name)
            if value is None:
                continue
            if isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, float):
                text = repr(value)
            else:
                text = str(value)
            lines.append(f"{name}={text}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_mapping(cls, values: dict[str, Any]) -> "PipelineConfig":
        """Build a configuration, turning validation failures into InvalidConfigError."""
        try:
            return cls(**values)
        except ValidationError as e:
            raise InvalidConfigError(f"Invalid pipeline configuration: {e}") from e

    @classmethod
    def from_text(cls, text: str) -> "PipelineConfig":
        """Parse key=value text."""
        values: dict[str, Any] = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise InvalidConfigError(f"line {lineno}: expected key=value, got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key in values:
                raise InvalidConfigError(f"line {lineno}: duplicate key {key!r}")
            values[key] = value
        return cls.from_mapping(values)


def load_pipeline_config(path: Path | None) -> PipelineConfig:
    """
    Load a pipeline configuration file.

    Args:
        path: key=value text file, a .toml file with a [pipeline] section, or None

    Returns:
        PipelineConfig: Parsed configuration (defaults when path is None)

    Raises:
        InvalidConfigError: If the file holds unknown keys or invalid values
        FileNotFoundError: If path does not exist
    """
    if path is None:
        return PipelineConfig()

    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".toml":
        try:
            data = toml.loads(text)
        except toml.TomlDecodeError as e:
            raise InvalidConfigError(f"Invalid TOML in {path}: {e}") from e
        return PipelineConfig.from_mapping(dict(data.get("pipeline", {})))
    return PipelineConfig.from_text(text)
