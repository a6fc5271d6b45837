"""Exception types shared across the pipeline."""

from __future__ import annotations


class ConfigurationError(Exception):
    """A configuration value references something that does not exist."""


class FormatError(Exception):
    """A log file's structure (not an individual row) is unusable."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


class DataQualityError(Exception):
    """Row-level errors exceeded the configured tolerable fraction."""
