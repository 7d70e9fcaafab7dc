# backend/config.py
from dotenv import load_dotenv, find_dotenv
import logging

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

# Load nearest .env from project tree, don't override existing process env
load_dotenv(find_dotenv(usecwd=True), override=False)

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    """Process-level knobs read from HELMDD_* environment variables."""

    model_config = SettingsConfigDict(env_prefix="HELMDD_", extra="ignore")

    # Resource guards
    MAX_DOFS: int = Field(default=500_000, gt=0)
    MAX_VERTICES: int = Field(default=2_000_000, gt=0)

    # Sweep execution
    WORKERS: int = Field(default=1, ge=1)
    RUN_TIMEOUT_S: float = Field(default=0.0, ge=0.0)  # 0 disables

    # Numerical tolerances
    PIVOT_TOL: float = Field(default=1e-14, gt=0.0)
    HARMONIC_TOL: float = Field(default=1e-8, gt=0.0)
    DENSE_NORM_LIMIT: int = Field(default=400, ge=1)
    POWER_TOL: float = Field(default=1e-8, gt=0.0)
    POWER_MAXIT: int = Field(default=10_000, ge=1)

    # Logs
    LOG_DIR: str = ".run"


_settings: Settings | None = None


def get_settings() -> Settings:
    """Return the process-wide Settings, built on first use."""
    global _settings
    if _settings is None:
        _settings = Settings()
        logger.debug(f"[CONFIG] settings loaded: {_settings.model_dump()}")
    return _settings


def reset_settings() -> None:
    """Drop the cached Settings so the next call re-reads the environment."""
    global _settings
    _settings = None

