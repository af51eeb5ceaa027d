"""Exception types shared across the package."""


class SsmctlError(Exception):
    """Base class for every error this package raises on purpose."""


class InvalidParameter(SsmctlError):
    """An argument is non-finite, out of domain, or otherwise unusable."""


class ShapeError(SsmctlError):
    """Array dimensions or sequence lengths do not line up."""


class NumericalFailure(SsmctlError):
    """An iterative numerical procedure failed to converge."""


class ResourceLimit(SsmctlError):
    """A configured size guard was exceeded."""


class UnstableSystem(SsmctlError):
    """A computation that requires |a_bar| < 1 met an unstable entry."""


class InvalidInput(SsmctlError):
    """A composite argument violates its contract."""


class ParseError(SsmctlError):
    """Archive bytes could not be parsed into a header."""


class CorruptArchive(SsmctlError):
    """Archive byte ranges are inconsistent with the header."""


class SchemaError(SsmctlError):
    """Archive is structurally sound but violates the tensor schema."""


class InvalidArchive(SsmctlError):
    """In-memory archive violates invariants and cannot be serialized."""
