"""Process-level configuration for nifkit."""

import os
from pathlib import Path

from pydantic import BaseModel, Field, field_validator


class NifkitConfig(BaseModel):
    """Configuration shared by the library helpers and the CLI."""

    workspace: Path = Field(
        default_factory=lambda: Path(os.getenv("NIFKIT_WORKSPACE", "nifkit-runs"))
        .expanduser()
        .resolve()
    )
    threads: int = Field(
        default_factory=lambda: int(os.getenv("NIFKIT_THREADS", "4"))
    )
    log_level: str = Field(
        default_factory=lambda: os.getenv("NIFKIT_LOG_LEVEL", "INFO")
    )

    @field_validator("threads")
    @classmethod
    def _positive_threads(cls, v: int) -> int:
        """Worker cap must allow at least one worker."""
        if v < 1:
            raise ValueError("threads must be >= 1")
        return v

    @field_validator("log_level")
    @classmethod
    def _known_level(cls, v: str) -> str:
        """Accept standard logging level names only."""
        level = v.upper()
        if level not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"Unknown log level: {v}")
        return level

    @classmethod
    def from_env(cls, prefix: str = "NIFKIT_") -> "NifkitConfig":
        """Create config from environment variables with given prefix."""
        return cls(
            workspace=Path(os.getenv(f"{prefix}WORKSPACE", "nifkit-runs"))
            .expanduser()
            .resolve(),
            threads=int(os.getenv(f"{prefix}THREADS", "4")),
            log_level=os.getenv(f"{prefix}LOG_LEVEL", "INFO"),
        )
