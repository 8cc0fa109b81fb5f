"""Exception hierarchy shared across the package.

CLI exit-code mapping: ConfigError -> 2, BlowupError -> 3, OSError -> 4.
"""


class StapdeError(Exception):
    """Base class for all package errors."""


class ConfigError(StapdeError):
    """Invalid configuration value (bad signature, dims, file schema, ...)."""


class UsageError(StapdeError):
    """Contract violation by the caller (shape/signature mismatch, bad range)."""


class ParseError(UsageError):
    """Malformed textual blade name or config token."""


class BlowupError(StapdeError):
    """Non-finite field or loss detected; carries the step where it happened."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step
