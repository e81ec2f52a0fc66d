"""Exception hierarchy shared across the package.

The CLI maps these onto its exit-code taxonomy: I/O and parse failures,
mesh validation failures, and numerical failures are distinguished so
scripts can branch on the exit status.
"""


class AuthalicError(Exception):
    """Base class for all package errors."""


class MeshLoadError(AuthalicError):
    """A mesh file is missing, unreadable, or does not parse."""


class MeshValidationError(AuthalicError):
    """A parsed mesh violates a structural requirement (non-manifold,
    closed, degenerate face, multiple boundary loops, ...)."""


class FactorizationError(AuthalicError):
    """A matrix expected to be symmetric positive definite is not."""

    def __init__(self, message, pivot_index=None):
        super().__init__(message)
        self.pivot_index = pivot_index


class DegenerateMapError(AuthalicError):
    """A map's boundary polygon is degenerate or inverted (image area <= 0),
    or an iteration produced non-finite values."""


class NotDescentError(AuthalicError):
    """A line search was entered with a non-descent direction."""
