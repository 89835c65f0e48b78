"""Exception hierarchy shared by every loobench module.

The CLI maps these to exit codes: validation/schema problems exit 2,
provider problems exit 3, storage problems exit 4.
"""

from __future__ import annotations


class LoobenchError(Exception):
    """Base class for all loobench errors."""


class SchemaError(LoobenchError):
    """An artifact or domain value violates one of its invariants."""


class KindMismatchError(SchemaError):
    """A loaded artifact is not of the expected kind."""


class StorageError(LoobenchError):
    """Filesystem-level failure while persisting or reading artifacts."""


class LineageError(LoobenchError):
    """An upstream reference cannot be resolved in the store."""


class ValidationError(LoobenchError):
    """A configuration or precondition check failed before any work ran."""


class ProviderError(LoobenchError):
    """An LLM provider call failed."""


class AuthConfigError(ProviderError):
    """A required API key environment variable is missing or empty."""


class TransientProviderError(ProviderError):
    """Retryable provider failure: timeout, 429, or 5xx."""


class MockMissError(ProviderError):
    """A mock client received a message it has no scripted reply for."""


class ParseError(LoobenchError):
    """A structured LLM response could not be parsed."""


class MissingTagError(ParseError):
    """The response contains no occurrence of the expected tag."""


class MalformedTagError(ParseError):
    """The response opens the expected tag but never closes it."""


class InvalidOutcomeError(ParseError):
    """Tag content is not one of the allowed outcomes."""

    def __init__(self, message: str, raw_content: str):
        super().__init__(message)
        self.raw_content = raw_content


class AmbiguousCitationError(ParseError):
    """A response cites two or more distinct context indices."""


class GroundingError(ValidationError):
    """An extracted fact cites a sentence index absent from the document."""


class EmptyExtractionError(ValidationError):
    """Fact extraction produced no facts."""


class GenerationParseError(ParseError):
    """A question/answer generation response could not be parsed."""


class EmptyFieldError(ValidationError):
    """A generated question or answer is empty."""


class ShortfallError(ValidationError):
    """Fewer items were parsed than requested."""

    def __init__(self, message: str, got: int, wanted: int):
        super().__init__(message)
        self.got = got
        self.wanted = wanted


class RunFailureError(LoobenchError):
    """Too many per-item failures for a run's output to be trusted."""


class AlreadyLabeledError(LoobenchError):
    """An annotator attempted to relabel an already-labeled item."""


class MissingResolutionError(LoobenchError):
    """Consensus was requested while disagreements lack resolutions."""

    def __init__(self, message: str, item_ids: list[str]):
        super().__init__(message)
        self.item_ids = item_ids
