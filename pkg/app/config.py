from functools import lru_cache
from pathlib import Path

from pydantic_settings import BaseSettings

PROJECT_ROOT = Path(__file__).resolve().parent.parent

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(name)s - %(message)s"


class Settings(BaseSettings):
    NUM_WORKERS: int = 1
    THREADS: int = 1  # torch intra-op threads and simulator pool size; 1 is bitwise reproducible
    DB_PATH: str = "./runs.db"
    RUNS_DIR: str = "./runs"
    CONFIG_DIR: str = str(PROJECT_ROOT / "configs")
    LOG_LEVEL: str = "INFO"
    MAX_CONFIG_SIZE_KB: int = 256

    model_config = {"env_file": ".env", "env_file_encoding": "utf-8"}


@lru_cache
def get_settings() -> Settings:
    return Settings()
