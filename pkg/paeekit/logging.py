"""Logging setup: Rich console records, optional plain-text log file."""
import logging
import logging.config
from pathlib import Path
from typing import Optional

import yaml
from rich.logging import RichHandler

PACKAGE_LOGGERS = ("paeekit", "py.warnings")
FILE_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def _apply_yaml(config_path: Path, log_file: Optional[Path]) -> None:
    config = yaml.safe_load(config_path.read_text())
    for handler in config.get("handlers", {}).values():
        if handler.get("class") == "logging.FileHandler":
            if log_file:
                handler["filename"] = str(log_file)
            Path(handler["filename"]).parent.mkdir(parents=True, exist_ok=True)
    logging.config.dictConfig(config)


def setup_logging(
    config_path: Optional[Path] = None,
    default_level: int = logging.WARNING,
    log_file: Optional[Path] = None,
) -> None:
    """Attach handlers to the paeekit and captured-warnings loggers.

    A YAML ``config_path`` is applied through dictConfig instead. Calling this
    again replaces the handlers of the previous call.
    """
    if config_path and config_path.is_file():
        _apply_yaml(config_path, log_file)
        return

    handlers = [RichHandler(rich_tracebacks=True, markup=True, show_path=False, level=default_level)]
    if log_file:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_file)
        file_handler.setFormatter(logging.Formatter(FILE_FORMAT))
        file_handler.setLevel(logging.DEBUG)
        handlers.append(file_handler)

    for name in PACKAGE_LOGGERS:
        logger = logging.getLogger(name)
        for old in list(logger.handlers):
            logger.removeHandler(old)
            old.close()
        for handler in handlers:
            logger.addHandler(handler)
        logger.setLevel(logging.DEBUG if log_file else default_level)


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(name)
