"""Exception hierarchy shared across the package."""


class DwellCertError(Exception):
    """Base class for all package errors."""


class NonFiniteError(DwellCertError, ValueError):
    pass


class NoConvergenceError(DwellCertError, ArithmeticError):
    pass


class DimensionMismatch(DwellCertError, ValueError):
    pass


class UnsupportedDimension(DwellCertError, ValueError):
    pass


class IndexMismatch(DwellCertError, ValueError):
    pass


class ShapeMismatch(DwellCertError, ValueError):
    pass


class NonHurwitzError(DwellCertError, ValueError):
    """A mode matrix has an eigenvalue with non-negative real part."""

    def __init__(self, message, eigenvalues=None):
        super().__init__(message)
        self.eigenvalues = eigenvalues


class BadHorizon(DwellCertError, ValueError):
    pass


class ScheduleError(DwellCertError, ValueError):
    """A switching schedule violates the dwell-time restriction or is malformed."""


class SchemaError(DwellCertError, ValueError):
    """A JSON document does not match the expected (closed) schema."""
