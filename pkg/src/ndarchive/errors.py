"""Exception types shared across the package."""


class NdarchiveError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(NdarchiveError, ValueError):
    """An argument violates an operation's preconditions."""


class IncomparableHashError(NdarchiveError, ValueError):
    """Hamming comparison attempted between hashes of different algorithms."""


class NotFoundError(NdarchiveError, KeyError):
    """A requested identifier is not present in the index."""


class DegenerateEmbeddingError(NdarchiveError, ValueError):
    """Normalization was requested for an exactly-zero vector."""


class NumericFailureError(NdarchiveError, ArithmeticError):
    """A numeric computation produced a non-finite value.

    ``operation`` names the graph operation (or optimizer step) that
    first produced the non-finite value.
    """

    def __init__(self, operation: str, message: str | None = None):
        self.operation = operation
        super().__init__(message or f"non-finite value produced by {operation!r}")


class ManifestError(NdarchiveError, ValueError):
    """A corpus manifest is malformed or references missing files."""
