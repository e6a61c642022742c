from functools import lru_cache
from pathlib import Path

from dotenv import load_dotenv
from pydantic_settings import BaseSettings, SettingsConfigDict

load_dotenv()


class Settings(BaseSettings):
    """Runtime settings, read from NLRB_* environment variables or a .env file."""

    model_config = SettingsConfigDict(env_prefix="NLRB_", env_file=".env", extra="ignore")

    log_level: str = "INFO"
    workers: int = 4  # threads used for parameter sweeps
    out_dir: Path = Path("results")
    mesh_exp: int = 7  # desk-scale mesh h = 2^-7
    large_mesh_exp: int = 9


@lru_cache
def get_settings() -> Settings:
    return Settings()
