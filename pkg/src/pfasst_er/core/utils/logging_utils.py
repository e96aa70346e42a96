"""Logging setup for the package and the command line."""

import logging
from pathlib import Path
from typing import Optional, Union

from rich.console import Console
from rich.logging import RichHandler

PACKAGE_LOGGER = "pfasst_er"
DEFAULT_FORMAT = "%(message)s"
FILE_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def setup_logging(
    level: Union[int, str] = "INFO",
    fmt: str = DEFAULT_FORMAT,
    file: Optional[Union[str, Path]] = None,
    console: Optional[Console] = None
) -> logging.Logger:
    """Attach a rich console handler, and optionally a file handler, to the package logger.

    Calling it again replaces the handlers installed before.

    Args:
        level: Log level name or number.
        fmt: Format of console records.
        file: Optional log file; parent directories are created.
        console: Console to write to, stderr by default.

    Returns:
        The package logger.
    """
    logger = logging.getLogger(PACKAGE_LOGGER)
    logger.setLevel(level.upper() if isinstance(level, str) else level)
    for handler in list(logger.handlers):
        if getattr(handler, "_installed_by_setup", False):
            logger.removeHandler(handler)
            handler.close()

    handler = RichHandler(console=console or Console(stderr=True), show_path=False)
    handler.setFormatter(logging.Formatter(fmt))
    handler._installed_by_setup = True
    logger.addHandler(handler)

    if file is not None:
        path = Path(file).expanduser()
        path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(path)
        file_handler.setFormatter(logging.Formatter(FILE_FORMAT))
        file_handler._installed_by_setup = True
        logger.addHandler(file_handler)
    return logger
