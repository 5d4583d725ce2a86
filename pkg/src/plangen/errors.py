"""Exception hierarchy shared across the toolkit."""


class PlangenError(Exception):
    """Base class for all toolkit errors."""


class CorpusError(PlangenError):
    """Malformed corpus input. Carries file/line context when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class PlanError(PlangenError):
    """A sequence is not a valid permutation of its concept set."""


class GeneratorError(PlangenError):
    """A generator call failed (transport, protocol, or model failure)."""


class ProtocolError(GeneratorError):
    """The generator reply violated the wire contract."""


class TransportError(GeneratorError):
    """The generator endpoint could not be reached after retries."""


class PartialResultsError(PlangenError):
    """A multi-call operation aborted with only part of its results.

    Attributes:
        instance_id: instance being processed when the abort happened.
        completed: number of calls that finished before the abort.
    """

    def __init__(self, message: str, instance_id: str, completed: int):
        super().__init__(message)
        self.instance_id = instance_id
        self.completed = completed


class DumpFormatError(PlangenError):
    """A tensor-dump container failed structural validation."""


class AnalysisError(PlangenError):
    """Analysis inputs are incomplete or degenerate."""
