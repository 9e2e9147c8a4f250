"""
Logging configuration for coopsync.

One package logger with timestamped, optionally coloured output.
Log level can be controlled via COOPSYNC_LOG_LEVEL environment variable.
File logging can be enabled via COOPSYNC_LOG_FILE environment variable.

Example output:
    [2026-10-17 14:23:45] [INFO] Sweep condition mode=oracle latency=400ms ap50=1.000
    [2026-10-17 14:23:46] [DEBUG] Cache 'infra' evicted frame t=300000us
    [2026-10-17 14:23:47] [WARNING] Object 3 left the world bounds at t=1.40s, despawned
"""

from __future__ import annotations

import logging
import sys
from datetime import datetime
from typing import Any, Optional, Union

from . import config as cfg

LOGGER_NAME = "coopsync"

_logger: Optional[logging.Logger] = None


class CoopSyncFormatter(logging.Formatter):
    """[YYYY-MM-DD HH:MM:SS] [LEVEL] message, with the level coloured on a TTY."""

    COLORS = {
        logging.DEBUG: "\033[36m",
        logging.INFO: "\033[32m",
        logging.WARNING: "\033[33m",
        logging.ERROR: "\033[31m",
        logging.CRITICAL: "\033[35m",
    }
    RESET = "\033[0m"

    def __init__(self, use_colors: bool = True) -> None:
        super().__init__()
        self.use_colors = use_colors

    def format(self, record: logging.LogRecord) -> str:
        stamp = datetime.fromtimestamp(record.created).strftime("%Y-%m-%d %H:%M:%S")
        level = record.levelname
        if self.use_colors and record.levelno in self.COLORS:
            level = f"{self.COLORS[record.levelno]}{level}{self.RESET}"
        return f"[{stamp}] [{level}] {record.getMessage()}"


def _console_colors() -> bool:
    if cfg.LOG_COLOR == "auto":
        return sys.stdout.isatty()
    return bool(cfg.LOG_COLOR)


def _attach(logger: logging.Logger, handler: logging.Handler, colors: bool) -> None:
    handler.setLevel(logger.level)
    handler.setFormatter(CoopSyncFormatter(use_colors=colors))
    logger.addHandler(handler)


def get_logger() -> logging.Logger:
    """
    The package logger, built on first use.

    Level, optional log file and colouring come from COOPSYNC_LOG_LEVEL,
    COOPSYNC_LOG_FILE and COOPSYNC_LOG_COLOR. Records do not propagate to
    the root logger.
    """
    global _logger
    if _logger is not None:
        return _logger

    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(getattr(logging, cfg.LOG_LEVEL, logging.INFO))
    logger.handlers.clear()
    logger.propagate = False
    _attach(logger, logging.StreamHandler(sys.stdout), _console_colors())

    if cfg.LOG_FILE:
        try:
            _attach(logger, logging.FileHandler(cfg.LOG_FILE, encoding="utf-8"), colors=False)
        except OSError as e:
            logger.warning(f"Could not create log file '{cfg.LOG_FILE}': {e}")

    _logger = logger
    return logger


def set_log_level(level: Union[str, int]) -> None:
    """Set the level of the logger and all its handlers, by name or number."""
    if isinstance(level, str):
        level = getattr(logging, level.upper(), logging.INFO)
    logger = get_logger()
    logger.setLevel(level)
    for handler in logger.handlers:
        handler.setLevel(level)


def enable_debug() -> None:
    set_log_level(logging.DEBUG)


def disable_logging() -> None:
    get_logger().setLevel(logging.CRITICAL + 1)


def reset_logger() -> None:
    """Drop handlers so the next call rebuilds the logger from the environment."""
    global _logger
    if _logger is not None:
        _logger.handlers.clear()
        _logger = None


def debug(msg: str, *args: Any, **kwargs: Any) -> None:
    get_logger().debug(msg, *args, **kwargs)


def info(msg: str, *args: Any, **kwargs: Any) -> None:
    get_logger().info(msg, *args, **kwargs)


def warning(msg: str, *args: Any, **kwargs: Any) -> None:
    get_logger().warning(msg, *args, **kwargs)


def error(msg: str, *args: Any, **kwargs: Any) -> None:
    get_logger().error(msg, *args, **kwargs)


def critical(msg: str, *args: Any, **kwargs: Any) -> None:
    get_logger().critical(msg, *args, **kwargs)
