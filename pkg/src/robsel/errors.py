"""Exception taxonomy shared across the package.

The CLI maps each class to its own exit code, so raise the most specific
one available and include enough context (file, checkpoint id, index) for
the message to stand on its own.
"""


class RobselError(Exception):
    """Base class for all package errors."""


class DegenerateInputError(RobselError):
    """Input is numerically degenerate (zero norm, zero variance, constant)."""


class ShapeMismatchError(RobselError):
    """Array dimensions do not match what the operation requires."""


class FileFormatError(RobselError):
    """A tensor file violates the portable format."""


class ManifestError(RobselError):
    """A run manifest is missing fields or violates its invariants."""


class MissingDataError(RobselError):
    """Referenced checkpoint or image data could not be loaded."""
