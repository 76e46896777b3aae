"""Exception hierarchy.

Every error raised on purpose by this package derives from :class:`FDIError`,
which is a ``ValueError`` so that sklearn-style callers catching bad-input
errors keep working.
"""


class FDIError(ValueError):
    """Base class for all package errors."""


class EmptyDatasetError(FDIError):
    pass


class SpaceMismatchError(FDIError):
    pass


class NotBinaryError(FDIError):
    pass


class DegeneratePError(FDIError):
    pass


class BadKError(FDIError):
    pass


class BadPError(FDIError):
    pass


class BadNormError(FDIError):
    pass


class BadXiError(FDIError):
    pass


class EmptyOverlapError(FDIError):
    pass


class EmptyTrainingError(FDIError):
    pass


class EqualMeansError(FDIError):
    pass


class ZeroVectorError(FDIError):
    pass


class DegenerateBoundsError(FDIError):
    pass


class InfeasibleSeparationError(FDIError):
    pass


class ParseError(FDIError):
    """Malformed input. ``lines`` holds the offending 1-based line numbers."""

    def __init__(self, message, lines=()):
        super().__init__(message)
        self.lines = list(lines)
