"""Exception types shared across the pipeline."""


class ForgeError(Exception):
    """Base class for all toolkit errors."""


class FormatError(ForgeError):
    """A structured input file is malformed. Carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class ProviderError(ForgeError):
    """An embedding provider failed (network, IO, missing key, bad output)."""

    def __init__(self, message: str, retries: int = 0):
        super().__init__(message)
        self.retries = retries


class DimensionMismatch(ForgeError):
    pass


class ZeroVector(ForgeError):
    pass


class KTooLarge(ForgeError):
    pass


class TooFewPoints(ForgeError):
    pass


class TaggerUnavailable(ForgeError):
    pass


class EmptyCorpus(ForgeError):
    pass


class EmptyCluster(ForgeError):
    pass


class NoRoot(ForgeError):
    pass


class MultipleRoots(ForgeError):
    pass


class NoExtractableElements(ForgeError):
    pass


class ParseError(ForgeError):
    """Pattern-query syntax error. `offset` is the character index in the input."""

    def __init__(self, offset: int, expected: str, found: str = ""):
        detail = f"at offset {offset}: expected {expected}"
        if found:
            detail += f", found {found!r}"
        super().__init__(detail)
        self.offset = offset
        self.expected = expected


class DanglingEndpoint(ForgeError):
    pass


class UnknownId(ForgeError):
    pass


class LlmError(ForgeError):
    """LLM client failure. May carry the partial QA trace in `trace`."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class ConfigMismatch(ForgeError):
    """An artifact was produced under a different pipeline configuration."""


class StageError(ForgeError):
    """A pipeline stage failed. Carries the stage name."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
