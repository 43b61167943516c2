"""Process configuration."""
from pathlib import Path
from functools import lru_cache

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Settings loaded from FAIRGAME_* environment variables.

    Only MC_SAMPLES changes numerical results; the rest bound resources.
    """

    # Paths
    BASE_DIR: Path = Path(__file__).parent.parent
    OUTPUT_DIR: Path = Path("runs")

    # Parallelism cap for joblib workers
    THREADS: int = Field(default=1, ge=1)

    LOG_LEVEL: str = "INFO"

    # Monte-Carlo budgets
    MC_SAMPLES: int = Field(default=200_000, ge=1000)
    MC_CHUNK: int = Field(default=1_000_000, ge=1)
    SHAPLEY_MC_BATCH: int = Field(default=10_000, ge=1)

    # Score rows per Fisher accumulation chunk
    FISHER_CHUNK: int = Field(default=4096, ge=1)

    model_config = SettingsConfigDict(env_prefix="FAIRGAME_", env_file=".env", extra="ignore")


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()
