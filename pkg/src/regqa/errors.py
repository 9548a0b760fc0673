"""Exception types shared across the package."""


class RegqaError(Exception):
    """Base class for all regqa errors."""


class UpstreamError(RegqaError):
    """A remote dependency (embedding, LLM, or reranker endpoint) failed."""


# --- ingest ---------------------------------------------------------------

class EmptyInputError(RegqaError):
    """Raw input was empty."""


class NoContentError(RegqaError):
    """Parsing produced zero blocks."""


# --- chunker --------------------------------------------------------------

class EmptyDocumentError(RegqaError):
    """Document has no blocks to chunk."""


class UnknownChunkError(RegqaError):
    """Referenced chunk_id does not exist in the corpus."""


# --- lexindex -------------------------------------------------------------

class EmptyCorpusError(RegqaError):
    """Cannot build an index over zero chunks."""


class DuplicateChunkIdError(RegqaError):
    """Two chunks share the same chunk_id."""


# --- vecindex -------------------------------------------------------------

class ProviderUnreachableError(UpstreamError):
    """Embedding endpoint could not be reached or replied unusably."""


class DimensionMismatchError(RegqaError):
    """Vector length disagrees with the index or provider dimension."""


# --- retriever ------------------------------------------------------------

class IndexMismatchError(RegqaError):
    """Lexical/vector indexes or embedding fingerprints disagree."""


class RerankUnavailableError(UpstreamError):
    """Rerank endpoint could not be reached; callers fall back to fused order."""


# --- ragqa ----------------------------------------------------------------

class BudgetTooSmallError(RegqaError):
    """Prompt token budget cannot fit the template and question."""


class LlmUnreachableError(UpstreamError):
    """Chat endpoint could not be reached."""


class LlmProtocolError(UpstreamError):
    """Chat endpoint replied with an unusable payload or status."""


# --- rulecode -------------------------------------------------------------

class SchemaViolationError(RegqaError):
    """Rule document does not match the documented schema."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")


class UnitError(RegqaError):
    """Quantity string carries a missing or unsupported unit."""

    def __init__(self, path: str, value: str):
        self.path = path
        self.value = value
        super().__init__(f"{path}: cannot parse power quantity {value!r} (expected '<number> watts')")


class TierOrderError(RegqaError):
    """HAAT tiers are not strictly increasing in height with non-increasing limits."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")


class HaatOutOfDomainError(RegqaError):
    """Queried HAAT lies above the last tier; the rules are silent there."""


class NoMatchingClassError(RegqaError):
    """No station class in the rule set covers the query."""


class ExtractionFailedError(RegqaError):
    """LLM rule extraction exhausted its repair rounds."""

    def __init__(self, rounds: int, last_error: RegqaError):
        self.rounds = rounds
        self.last_error = last_error
        super().__init__(f"rule extraction failed after {rounds} round(s): {last_error}")
