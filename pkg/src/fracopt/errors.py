"""Exception types shared across the package."""


class FracOptError(Exception):
    """Base class for all package errors."""


class DomainError(FracOptError, ValueError):
    """An argument lies outside the domain where an operation is defined."""


class ShapeError(FracOptError, ValueError):
    """Array shapes do not match the mesh or grid they are paired with."""


class SolverError(FracOptError, RuntimeError):
    """A numerical solve produced non-finite values or otherwise broke down."""
