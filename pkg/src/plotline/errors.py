"""Exception and warning types shared across the pipeline."""


class PlotlineError(Exception):
    """Base class for all pipeline errors."""


# --- corpus ---------------------------------------------------------------

class InvalidPattern(PlotlineError):
    """A heading pattern failed to compile."""


class ParseError(PlotlineError):
    """An annotation file line is not valid JSON."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class SchemaError(PlotlineError):
    """An annotation record is missing a field or violates an invariant."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class OrderError(PlotlineError):
    """Annotation records are unsorted or chapter indices have gaps."""


# --- graph ----------------------------------------------------------------

class MalformedTree(PlotlineError):
    """A sentence's head pointers contain a cycle."""

    def __init__(self, sentence_index: int):
        super().__init__(f"head pointers contain a cycle in sentence {sentence_index}")
        self.sentence_index = sentence_index


class MissingEntry(PlotlineError):
    """A table-backed embedding provider has no vector for a surface."""


class ProviderFailure(PlotlineError):
    """Feature assembly could not obtain an embedding for a node."""


# --- gat ------------------------------------------------------------------

class DimensionMismatch(PlotlineError):
    """Input dimensions do not compose with layer parameters."""


class NonFiniteLoss(PlotlineError):
    """Training produced a NaN or infinite loss."""

    def __init__(self, epoch: int):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch


class DegenerateCovariance(UserWarning):
    """All embeddings identical; 2-D projection is all zeros."""


# --- boundary -------------------------------------------------------------

class IndexOutOfRange(PlotlineError):
    """Chapter index outside the valid range of a sequence."""


class EmptyGrid(PlotlineError):
    """Calibration was given an empty parameter grid."""


# --- summarize ------------------------------------------------------------

class LlmError(PlotlineError):
    """Base class for completion-client failures."""


class Timeout(LlmError):
    """The completion request timed out (retryable)."""


class AuthFailure(LlmError):
    """Authentication was rejected (never retried)."""


class RateLimited(LlmError):
    """The endpoint throttled or transiently failed the request (retryable)."""


class MalformedResponse(LlmError):
    """The endpoint returned a body the client cannot interpret."""


class MissingSegment(PlotlineError):
    """Outline assembly received a gapped set of segment summaries."""


# --- evaluation -----------------------------------------------------------

class MismatchedItems(PlotlineError):
    """Two rankings do not cover the same item set."""


class IoFailure(PlotlineError):
    """A report file could not be written."""


# --- cli ------------------------------------------------------------------

class ConfigError(PlotlineError):
    """The pipeline config file is invalid."""


class MissingArtifact(PlotlineError):
    """A stage input artifact is absent."""

    def __init__(self, path, producer: str):
        super().__init__(f"missing artifact {path}; run the '{producer}' stage first")
        self.path = path
        self.producer = producer
