"""Exception types shared across the pipeline stages."""


class OpskgError(Exception):
    """Base class for all pipeline errors."""


class EmptyDocument(OpskgError):
    """Raised when a source document has no content."""


class MissingExemplars(OpskgError):
    """Raised when a prompt is requested without any few-shot examples."""


class MalformedOutput(OpskgError):
    """Raised when a backend response body cannot be parsed at all.

    Carries the offending body so failed responses can be audited.
    """

    def __init__(self, message: str, body: str):
        super().__init__(message)
        self.body = body


class BackendError(OpskgError):
    """Raised when a chunk request fails after all retries."""

    def __init__(self, message: str, chunk_ordinal: int, attempts: int):
        super().__init__(message)
        self.chunk_ordinal = chunk_ordinal
        self.attempts = attempts


class NoCandidateSpan(OpskgError):
    """Raised when fuzzy alignment is given an empty search window."""


class CyclicGraph(OpskgError):
    """Raised when depth layering meets a hasNext cycle."""

    def __init__(self, unprocessed: list[str]):
        super().__init__(f"cycle among vertices: {', '.join(unprocessed)}")
        self.unprocessed = unprocessed


class SchemaViolation(OpskgError):
    """Raised when a serialized knowledge graph fails validation.

    ``location`` points at the offending element, e.g. ``entities[3].label``.
    """

    def __init__(self, message: str, location: str):
        super().__init__(f"{location}: {message}")
        self.location = location


class EmptyEvaluation(OpskgError):
    """Raised when both the extracted and ground-truth triple sets are empty."""
