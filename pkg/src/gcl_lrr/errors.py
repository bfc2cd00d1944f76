"""Exception hierarchy shared across the package."""

from __future__ import annotations


class GclLrrError(Exception):
    """Base class for all package errors."""


class ConfigError(GclLrrError, ValueError):
    """A parameter or configuration value is outside its allowed range."""


class ContractError(GclLrrError, ValueError):
    """Inputs violate a structural precondition (shape, symmetry, coverage)."""


class DegenerateInputError(GclLrrError, ValueError):
    """The input is well-formed but the requested quantity is undefined for it."""


class NumericalError(GclLrrError, ArithmeticError):
    """A computation produced non-finite values."""

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message if epoch is None else f"{message} (epoch {epoch})")
        self.epoch = epoch


class BundleFormatError(GclLrrError, ValueError):
    """A bundle file is missing or malformed.

    ``file`` and ``line`` locate the problem; ``line`` is 1-based and ``None``
    when the problem is not tied to a single line.
    """

    def __init__(self, file: str, message: str, line: int | None = None):
        where = file if line is None else f"{file}:{line}"
        super().__init__(f"{where}: {message}")
        self.file = file
        self.line = line
        self.reason = message


class DegenerateEigengapWarning(UserWarning):
    """The eigengap at the truncation rank vanishes; the TNN gradient is a subgradient."""
