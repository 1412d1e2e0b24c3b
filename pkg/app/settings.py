"""Process-level settings using Pydantic Settings."""
from functools import lru_cache
from typing import Optional
from pydantic_settings import BaseSettings
from pydantic import Field


class Settings(BaseSettings):
    """Process settings with environment variable support."""

    # Application
    app_name: str = Field(default="Hand Shadow Art", description="Application name")
    environment: str = Field(default="development", description="Environment (development/production)")
    debug: bool = Field(default=False, description="Assert pose invariants after every optimizer step")

    # Execution
    workers: int = Field(default=1, ge=1, description="Process pool size for restarts and frame refinement")
    output_dir: str = Field(default="./runs", description="Output root when a run config omits one")
    snapshot_every: int = Field(default=50, ge=1, description="Parameter snapshot interval in iterations")

    # Logging
    log_level: str = Field(default="INFO", description="Log level")
    log_json: bool = Field(default=False, description="Use JSON logging format")
    log_file: Optional[str] = Field(default=None, description="Log file path")

    class Config:
        env_file = ".env"
        env_file_encoding = "utf-8"
        case_sensitive = False
        extra = "ignore"


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()


# Convenience access
settings = get_settings()
