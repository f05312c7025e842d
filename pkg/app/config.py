from pydantic import BaseSettings


class Settings(BaseSettings):
    output_dir: str = "out"
    log_level: str = "INFO"
    logging_config: str = "logging.ini"

    default_alpha: float = 5.0
    default_tokens_per_second: float = 20.0

    warmup_fraction: float = 0.05
    drain_fraction: float = 0.05

    capacity_resolution: float = 0.05
    sweep_workers: int = 1

    host: str = "127.0.0.1"
    port: int = 8000

    class Config:
        env_prefix = "SLOSIM_"


settings = Settings(
    _env_file=".env",
    _env_file_encoding="utf-8",
)


def get_settings() -> Settings:
    return settings
