"""Exception and warning types raised across hypercal."""


class HypercalError(Exception):
    """Base class for all hypercal errors."""


class FormatError(HypercalError, ValueError):
    """Malformed input text or binary."""


class SchemaError(FormatError):
    """Input parsed but is missing required fields or violates an invariant."""


class UnsupportedFormatError(FormatError):
    """Valid syntax naming a layout or data type we do not handle."""


class TruncationError(FormatError):
    """Binary payload shorter than its header declares."""


class RangeError(HypercalError, ValueError):
    pass


class DomainError(HypercalError, ValueError):
    pass


class DimensionError(HypercalError, ValueError):
    pass


class ParameterError(HypercalError, ValueError):
    pass


class InsufficientDataError(HypercalError, ValueError):
    pass


class DeadPixelError(HypercalError, ValueError):
    """Raised when a flat-field source has non-positive mean counts.

    ``indices`` holds the offending ``(sample, band)`` pairs.
    """

    def __init__(self, indices):
        self.indices = [tuple(int(v) for v in ij) for ij in indices]
        shown = ", ".join(str(ij) for ij in self.indices[:10])
        more = "" if len(self.indices) <= 10 else f" (+{len(self.indices) - 10} more)"
        super().__init__(f"non-positive flat-field mean at (sample, band): {shown}{more}")


class ConvergenceError(HypercalError, RuntimeError):
    """Optimizer hit its iteration limit; ``best`` carries the best iterate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class CalibrationAbortError(HypercalError):
    """Reference data unusable, e.g. saturated in some bands."""

    def __init__(self, message, bands=()):
        super().__init__(message)
        self.bands = list(bands)


class CalibrationIntegrityError(HypercalError):
    pass


class BoundsError(HypercalError, ValueError):
    pass


class NoSignalError(HypercalError, ValueError):
    pass


class CannotCoregisterError(HypercalError):
    pass


class LowConfidenceError(HypercalError):
    def __init__(self, message, confidence=None):
        super().__init__(message)
        self.confidence = confidence


class MisalignmentError(HypercalError):
    pass


class LayoutError(HypercalError, ValueError):
    pass


class SuspiciousScaleError(HypercalError, ValueError):
    pass


class SaturatedInputError(HypercalError, ValueError):
    pass


class DegenerateError(HypercalError, ValueError):
    pass


class ManifestError(HypercalError):
    """Manifest failed validation; ``diagnostics`` lists one message per problem."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(self.diagnostics))


class CalibrationWarning(UserWarning):
    """Non-fatal condition worth surfacing in run reports."""
