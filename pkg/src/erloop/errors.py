"""Exception types shared across the package."""


class ErloopError(Exception):
    """Base class for package errors."""


class IngestionError(ErloopError):
    """A corpus or file could not be read into a dataset."""


class ValidationError(ErloopError):
    """Data violates a contract (label range, duplicate ids, bad feedback)."""


class ConsistencyError(ErloopError):
    """Cross-referenced pieces of state disagree (missing prediction, bad position)."""


class DivergenceError(ErloopError):
    """Training hit a non-finite loss; the original model is untouched."""


class FormatError(ErloopError):
    """A model archive is malformed or truncated."""
