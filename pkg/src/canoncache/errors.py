"""Exception hierarchy shared across the package.

Every error raised on a validation or contract failure derives from
CanonCacheError so the CLI can map the whole family to exit code 2.
"""

from __future__ import annotations


class CanonCacheError(Exception):
    """Base class for all canoncache errors."""


class EmptyInput(CanonCacheError):
    """Input text or record list was empty where content is required."""


class OverlappingSpans(CanonCacheError):
    """Entity spans overlap or fall outside the text."""


class MissingEmbedding(CanonCacheError):
    """A query id has no vector in the embedding table."""


class SingleClass(CanonCacheError):
    """Centroid fitting needs at least two distinct keys."""


class DimensionMismatch(CanonCacheError):
    """Vector length does not match the model dimension."""


class ZeroVector(CanonCacheError):
    """Cosine similarity is undefined for the zero vector."""


class LengthMismatch(CanonCacheError):
    """Paired label sequences differ in length."""


class NoCoverage(CanonCacheError):
    """Safety is undefined when no record clears the threshold."""


class InvalidParams(CanonCacheError):
    """Numeric parameters outside their documented domain."""


class SharesInvalid(CanonCacheError):
    """Tier traffic shares do not sum to 1."""


class ResolverUnavailable(CanonCacheError):
    """All tiers abstained and no resolver hook is configured."""


class InvalidSpec(CanonCacheError):
    """Synthetic-corpus spec fails validation."""


class PipelineStageError(CanonCacheError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
