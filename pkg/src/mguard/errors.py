"""Exception types shared across the package, mapped to CLI exit codes."""

from __future__ import annotations


class MguardError(Exception):
    """Base class for all package errors."""


class ShapeError(MguardError):
    """An array argument has an incompatible dimension (named in the message)."""


class ConfigError(MguardError):
    """Bad configuration file, flag value, or option combination. Exit code 2."""


class DataError(MguardError):
    """Malformed input data (CSV rows, window stores, labels). Exit code 3."""


class NumericError(MguardError):
    """Non-finite loss or score; carries a diagnostic dump. Exit code 4."""


class CheckpointError(MguardError):
    """Checkpoint file rejected; reason is one of magic/version/truncated/config."""

    def __init__(self, reason: str, message: str):
        super().__init__(message)
        self.reason = reason
