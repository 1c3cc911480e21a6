"""Exception hierarchy shared across the package.

Each family maps to a distinct CLI exit code (see cli.EXIT_CODES).
"""


class TablemarkError(Exception):
    """Base class for all package errors."""


class ValidationError(TablemarkError):
    """Schema, table, or argument validation failed."""


class CapacityError(TablemarkError):
    """Watermark database cannot satisfy the requested capacity."""


class EncodingInfeasibleError(TablemarkError):
    """No watermarked histogram satisfies the robustness constraints."""

    def __init__(self, message, violated_bits=()):
        super().__init__(message)
        self.violated_bits = tuple(violated_bits)


class ArtifactIOError(TablemarkError):
    """Reading or writing a persisted artifact failed."""
