"""Exception types shared across the package."""


class PiSearchError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(PiSearchError):
    """Invalid or missing configuration."""


class IngestError(PiSearchError):
    """Corpus or ground-truth file could not be ingested."""


class DuplicateDocidError(IngestError):
    """Two corpus lines share the same docid."""


class EmptyCorpusError(PiSearchError):
    """An operation that needs documents was given none."""


class UnknownDocidError(PiSearchError):
    """Requested docid does not exist."""


class LineRangeError(PiSearchError):
    """Line offset points past the end of a document."""

    def __init__(self, message, total_lines):
        super().__init__(message)
        self.total_lines = total_lines


class BackendError(PiSearchError):
    """The retrieval backend failed or returned garbage."""


class ToolArgumentError(PiSearchError):
    """A tool call carried invalid arguments (e.g. empty reason)."""


class ToolsBlockedError(PiSearchError):
    """Tool call arrived after the submit-now steer blocked all tools."""


class StaleSearchIdError(PiSearchError):
    """search_id was evicted from (or never entered) the session cache."""


class RankRangeError(PiSearchError):
    """Rank offset points past the end of a cached ranking."""

    def __init__(self, message, hit_count):
        super().__init__(message)
        self.hit_count = hit_count


class SpillError(PiSearchError):
    """Spill file could not be written; the tool result must not be silently truncated."""


class ResponseFormatError(PiSearchError):
    """Final response text does not follow the required three-label format."""

    def __init__(self, message, missing=()):
        super().__init__(message)
        self.missing = tuple(missing)


class ScriptError(PiSearchError):
    """A scripted policy ran out of steps without an answer."""


class TransportError(PiSearchError):
    """LLM endpoint could not be reached or answered with a protocol error."""


class JudgeError(PiSearchError):
    """Judge output failed JSON parsing or schema validation."""


class PricingError(PiSearchError):
    """Pricing table is invalid or does not cover a model."""


class MetricsError(PiSearchError):
    """Metric is undefined for the given input (e.g. empty relevance set)."""
