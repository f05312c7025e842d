import logging
from logging.config import fileConfig
from pathlib import Path

from app.config import settings


def setup_logging(level: str | None = None) -> None:
    config_file = Path(settings.logging_config)
    if config_file.exists():
        fileConfig(config_file, disable_existing_loggers=False)
        if level:
            logging.getLogger().setLevel(level.upper())
        return
    logging.basicConfig(
        level=(level or settings.log_level).upper(),
        format="%(levelname)-5.5s [%(name)s] %(message)s",
    )
