"""Exception hierarchy for followup-kg."""

from typing import Any, Optional, Tuple


class FollowupKGError(Exception):
    """Base class for every error raised by this package."""


class DataError(FollowupKGError, ValueError):
    """Input data, files, or configuration are invalid."""


class CorpusError(DataError):
    """A corpus file could not be loaded."""

    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(message)
        self.line = line


class PassageNotFoundError(DataError, KeyError):
    """A passage id is not present in the corpus."""

    def __init__(self, passage_id: str):
        super().__init__(f"unknown passage id: {passage_id!r}")
        self.passage_id = passage_id

    def __str__(self) -> str:
        return self.args[0]


class LexicalError(DataError):
    """A lexical model could not be fitted."""


class GraphError(DataError):
    """A knowledge graph could not be built or queried."""


class GraphFormatError(GraphError):
    """A graph file is corrupt, truncated, or of an unsupported version."""


class ProvenanceError(GraphError):
    """A graph file was built over a different corpus."""


class SynthError(DataError):
    """A synthetic bundle could not be generated."""


class ConfigError(DataError):
    """The engine configuration is missing a required section."""


class NetworkError(FollowupKGError):
    """A remote endpoint could not be reached or answered badly."""


class TransportError(NetworkError):
    """The request failed below HTTP (connection reset, DNS, ...)."""


class EndpointStatusError(NetworkError):
    """The endpoint answered with a non-success status."""

    def __init__(self, message: str, status_code: int):
        super().__init__(message)
        self.status_code = status_code


class AuthError(EndpointStatusError):
    """Credentials are missing or were rejected."""


class EndpointTimeoutError(NetworkError):
    """The endpoint did not answer within the configured timeout."""


class MalformedResponseError(NetworkError):
    """The response body does not have the expected shape."""


class EmbeddingError(NetworkError):
    """A remote embedding batch failed."""

    def __init__(self, message: str, batch_range: Tuple[int, int]):
        super().__init__(f"embedding batch [{batch_range[0]}:{batch_range[1]}): {message}")
        self.batch_range = batch_range


class AgentError(FollowupKGError):
    """A traversal agent cannot answer for the given query."""


class TraversalError(FollowupKGError):
    """A traversal was aborted; ``partial`` holds what was retrieved so far."""

    def __init__(self, message: str, partial: Any):
        super().__init__(message)
        self.partial = partial
