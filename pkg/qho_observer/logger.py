"""
Logging configuration for QhoObserver.

Every module obtains a child of the ``qho_observer`` logger through ``get_logger``;
the command-line front end reconfigures the root package logger once per run.
"""

import logging
import os
import sys
from typing import Optional, Union

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
LOG_DATE_FORMAT = '%Y-%m-%d %H:%M:%S'
ROOT_LOGGER_NAME = "qho_observer"

_LEVELS = {
    "DEBUG": logging.DEBUG,
    "INFO": logging.INFO,
    "WARNING": logging.WARNING,
    "ERROR": logging.ERROR,
    "CRITICAL": logging.CRITICAL,
}


def resolve_level(level: Union[int, str]) -> int:
    """
    Translate a level name or number into a logging level.

    Raises:
    -------
    TypeError
        If level is neither an int nor a str.
    ValueError
        If level is not one of the standard logging levels.
    """
    if isinstance(level, bool) or not isinstance(level, (int, str)):
        raise TypeError(f"level must be an int or a level name, got {type(level).__name__}")
    if isinstance(level, str):
        if level.upper() not in _LEVELS:
            raise ValueError(f"unknown logging level name: {level}")
        return _LEVELS[level.upper()]
    if level not in _LEVELS.values():
        raise ValueError(f"level must be a valid logging level: {sorted(_LEVELS.values())}")
    return level


def setup_logger(
    name: str = ROOT_LOGGER_NAME,
    level: Union[int, str] = logging.INFO,
    log_file: Optional[str] = None,
    console_output: bool = True,
    file_mode: str = 'a'
) -> logging.Logger:
    """
    Set up and configure a logger.

    Parameters:
    -----------
    name : str, optional
        Name of the logger. Default is "qho_observer".
    level : int or str, optional
        Logging level or its name. Default is logging.INFO.
    log_file : str, optional
        Path to the log file. If None, file logging is disabled.
    console_output : bool, optional
        Whether to write log records to stderr. Default is True.
    file_mode : str, optional
        File mode for the log file. Default is 'a' (append).

    Returns:
    --------
    logging.Logger
        Configured logger instance.

    Raises:
    -------
    TypeError
        If parameters have incorrect types.
    ValueError
        If level is not a valid logging level or file_mode is not valid.
    """
    if not isinstance(name, str):
        raise TypeError(f"name must be a string, got {type(name).__name__}")
    numeric_level = resolve_level(level)
    if log_file is not None and not isinstance(log_file, str):
        raise TypeError(f"log_file must be a string or None, got {type(log_file).__name__}")
    if not isinstance(console_output, bool):
        raise TypeError(f"console_output must be a boolean, got {type(console_output).__name__}")
    if file_mode not in ('a', 'w', 'x'):
        raise ValueError(f"file_mode must be one of 'a', 'w', 'x', got {file_mode!r}")

    logger = logging.getLogger(name)
    logger.setLevel(numeric_level)
    logger.propagate = False

    for handler in logger.handlers[:]:
        logger.removeHandler(handler)
        handler.close()

    formatter = logging.Formatter(LOG_FORMAT, datefmt=LOG_DATE_FORMAT)

    # stdout stays free for command output
    if console_output:
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setFormatter(formatter)
        logger.addHandler(console_handler)

    if log_file:
        log_dir = os.path.dirname(log_file)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)
        file_handler = logging.FileHandler(log_file, mode=file_mode)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    return logger


logger = setup_logger(level=logging.WARNING)


def get_logger(name: Optional[str] = None) -> logging.Logger:
    """
    Get a logger instance below the package logger.

    ``get_logger("coupling.backaction")`` and
    ``get_logger("qho_observer.coupling.backaction")`` return the same logger.

    Raises:
    -------
    TypeError
        If name is not a string or None.
    """
    if name is not None and not isinstance(name, str):
        raise TypeError(f"name must be a string or None, got {type(name).__name__}")
    if not name:
        return logger
    if name == ROOT_LOGGER_NAME or name.startswith(ROOT_LOGGER_NAME + "."):
        return logging.getLogger(name)
    return logging.getLogger(f"{ROOT_LOGGER_NAME}.{name}")
