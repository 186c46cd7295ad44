"""Exception hierarchy shared across the package."""

from __future__ import annotations


class ForgeSimError(Exception):
    """Base class for every error raised by forgesim."""


class InvalidInput(ForgeSimError, ValueError):
    """Malformed input file or table."""


class ConfigError(ForgeSimError, ValueError):
    pass


class InsufficientData(ForgeSimError, ValueError):
    pass


class IndexMismatch(ForgeSimError, ValueError):
    """A target is missing from the popularity index."""


class EmptyToolbox(ForgeSimError, ValueError):
    pass


class InvalidParams(ForgeSimError, ValueError):
    pass


class OutOfRange(ForgeSimError, ValueError):
    pass


class EmptySet(ForgeSimError, ValueError):
    pass


class EmptyRoster(ForgeSimError, ValueError):
    pass


class StorageFailure(ForgeSimError, OSError):
    pass


class IoFailure(ForgeSimError, OSError):
    pass


class CorruptCheckpoint(ForgeSimError, ValueError):
    pass


class CorruptManifest(ForgeSimError, ValueError):
    pass


class BackendFailure(ForgeSimError):
    """A model backend call failed.

    ``attempts`` is the number of wire attempts made; ``step_index`` is set
    when the failure happened inside an operator chain.
    """

    def __init__(self, message: str, *, attempts: int = 1, step_index: int | None = None):
        super().__init__(message)
        self.attempts = attempts
        self.step_index = step_index


class BackendTimeout(BackendFailure):
    pass


class TransportError(BackendFailure):
    def __init__(self, message: str, *, status_code: int | None = None, **kw):
        super().__init__(message, **kw)
        self.status_code = status_code


class ProtocolError(BackendFailure):
    """Response body did not match the declared schema."""


class Exhausted(BackendFailure):
    """All retry attempts were spent on retryable failures."""

    def __init__(self, message: str, *, last_error: BackendFailure | None = None, **kw):
        super().__init__(message, **kw)
        self.last_error = last_error


class IterationCapExceeded(ForgeSimError):
    def __init__(self, message: str, *, iterations: int, accepted: int, target: int):
        super().__init__(message)
        self.iterations = iterations
        self.accepted = accepted
        self.target = target

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.iterations if self.iterations else 0.0
