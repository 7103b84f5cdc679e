"""Exception types shared across the package."""

from __future__ import annotations


class GraphMemError(Exception):
    """Base class for all graphmem errors."""


class ValidationError(GraphMemError):
    """Input violates a precondition or invariant."""


class ConflictError(GraphMemError):
    """A unique key (doc id, triple tuple) is already taken."""


class NotFoundError(GraphMemError):
    """Referenced node, triple, or document does not exist."""


class FrozenIndexError(GraphMemError):
    """Mutation attempted on a frozen graph."""


class IndexFormatError(GraphMemError):
    """Index directory is missing, corrupt, or has an unsupported version."""


class ConfigError(GraphMemError):
    """Configuration is inconsistent, e.g. a provider dimension mismatch."""


class DegenerateResetError(GraphMemError):
    """Every candidate seed score is zero; no reset distribution exists."""


class ProviderError(GraphMemError):
    """A remote provider call failed after retries."""

    def __init__(self, message: str, batch_index: int | None = None):
        super().__init__(message)
        self.batch_index = batch_index
