import logging
import os
import sys

import colorlog

_FORMAT = "%(log_color)s%(asctime)s %(levelname)-8s%(reset)s %(name)s: %(message)s"
_configured = False


def configure_logging(level: str | None = None) -> None:
    """
    Install a single colored stream handler on the ``src`` logger tree.

    Args:
        level (str | None): Log level name. Falls back to ``SNN_LOG_LEVEL``, then INFO.
    """
    global _configured
    level = (level or os.environ.get("SNN_LOG_LEVEL", "INFO")).upper()
    root = logging.getLogger("src")
    if not _configured:
        handler = colorlog.StreamHandler(sys.stderr)
        handler.setFormatter(colorlog.ColoredFormatter(_FORMAT, datefmt="%H:%M:%S"))
        root.addHandler(handler)
        root.propagate = False
        _configured = True
    root.setLevel(level)


def get_logger(name: str) -> logging.Logger:
    if not _configured:
        configure_logging()
    return logging.getLogger(name if name.startswith("src") else f"src.{name}")
