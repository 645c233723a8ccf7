"""Settings configuration for the ordinal time-series toolkit."""

from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import Field
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


class Settings(BaseSettings):
    """Pipeline defaults with environment variable support (prefix ``ORDINAL_TS_``)."""

    model_config = SettingsConfigDict(
        env_prefix="ORDINAL_TS_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore"
    )

    # Training Configuration
    batch_size: int = Field(
        default=256,
        ge=2,
        description="Mini-batch size"
    )

    learning_rate: float = Field(
        default=0.005,
        gt=0,
        description="Optimizer step size"
    )

    epochs: int = Field(
        default=30,
        ge=1,
        description="Passes over the training segments"
    )

    max_per_anchor: int = Field(
        default=4,
        ge=1,
        description="Quadruplets (or triplets) drawn per anchor in a batch"
    )

    # Encoder Configuration
    encoder_kind: str = Field(
        default="bi_recurrent",
        description="Temporal encoder (bi_recurrent or mean_pool_mlp)"
    )

    hidden_dim: int = Field(
        default=256,
        ge=1,
        description="Hidden state dimension of the encoder"
    )

    embed_dim: int = Field(
        default=256,
        ge=1,
        description="Output feature dimension"
    )

    window_length: int = Field(
        default=10,
        ge=1,
        description="Time steps per segment"
    )

    standardize: bool = Field(
        default=True,
        description="Standardize each channel with statistics of the training split"
    )

    # Loss Configuration
    margin: float = Field(
        default=0.2,
        ge=0,
        description="Triplet hinge margin"
    )

    epsilon_d: float = Field(
        default=1e-8,
        gt=0,
        description="Distance floor applied before the log-ratio term"
    )

    label_distance: str = Field(
        default="absolute",
        description="Label distance (absolute, squared, exp_decibel)"
    )

    # Retrieval Configuration
    alpha: float = Field(
        default=0.05,
        gt=0,
        lt=1,
        description="Type-I error level of the missing-class test"
    )

    rank_stat: str = Field(
        default="kendall_tau_b",
        description="Rank statistic (kendall_tau_b or spearman_rho)"
    )

    knn_k: int = Field(
        default=1,
        ge=1,
        description="Neighbours used by k-nn prediction (1 = nearest centroid)"
    )

    # Output Configuration
    output_dir: str = Field(
        default="runs",
        description="Default directory for run artifacts"
    )

    log_level: str = Field(
        default="INFO",
        description="Root logging level for the CLI"
    )


def load_settings() -> Settings:
    """Load settings with proper error handling."""
    try:
        return Settings()
    except Exception as e:
        error_msg = f"Failed to load settings: {e}"
        for name in ("alpha", "batch_size", "learning_rate", "epochs"):
            if name in str(e).lower():
                error_msg += f"\nCheck ORDINAL_TS_{name.upper()} in your environment or .env file"
        raise ValueError(error_msg) from e
