"""
Pydantic models for data generation and ingestion.
"""

from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class SyntheticConfig(BaseModel):
    """Ordinal AR(1) stream generator settings."""
    n_classes: int = Field(default=8, ge=3, description="Number of ordinal classes")
    n_channels: int = Field(default=3, ge=1, description="Channels per time step")
    segment_length: int = Field(default=10, ge=1, description="Time steps per segment")
    segments_per_class: int = Field(default=100, ge=1)
    class_separation: float = Field(default=1.0, gt=0, description="Mean step per ordinal unit")
    ar_coefficient: float = Field(default=0.5, ge=0, lt=1, description="AR(1) coefficient, < 1 for stationarity")
    noise_std: float = Field(default=0.5, gt=0, description="Innovation standard deviation")
    run_length: int = Field(default=1, ge=1, description="Segments per label-constant run in the stream")
    seed: int = 0

    model_config = ConfigDict(frozen=True)

    @property
    def class_names(self) -> List[str]:
        return [f"c{k}" for k in range(1, self.n_classes + 1)]


class StreamSpec(BaseModel):
    """How a CSV stream is cut into segments."""
    label_column: str = Field(default="label", min_length=1)
    feature_columns: List[str] = Field(default_factory=list, description="Empty means every non-label column")
    window_length: int = Field(default=10, ge=1)
    stride: Optional[int] = Field(default=None, ge=1, description="Defaults to window_length")

    model_config = ConfigDict(frozen=True)

    @field_validator("feature_columns")
    @classmethod
    def validate_feature_columns(cls, v: List[str]) -> List[str]:
        """Feature columns must be unique."""
        if len(set(v)) != len(v):
            raise ValueError(f"Duplicate feature columns: {v}")
        return v

    @model_validator(mode="after")
    def validate_label_not_feature(self) -> "StreamSpec":
        if self.label_column in self.feature_columns:
            raise ValueError(f"Label column {self.label_column!r} cannot also be a feature column")
        return self

    @property
    def effective_stride(self) -> int:
        return self.stride or self.window_length


class IngestionResult(BaseModel):
    """Result of ingesting one CSV file."""
    source: str
    rows: int
    runs: int
    segments_created: int
    rows_discarded: int
    processing_time_ms: float
    errors: List[str] = Field(default_factory=list)
