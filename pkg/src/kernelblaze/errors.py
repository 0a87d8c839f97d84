"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class KernelBlazeError(Exception):
    """Base class for every error raised by this package."""


# knowledge base
class MalformedFile(KernelBlazeError):
    def __init__(self, message: str, locus: str | None = None):
        self.locus = locus
        super().__init__(f"{locus}: {message}" if locus else message)


class VersionUnsupported(KernelBlazeError):
    pass


class VersionMismatch(KernelBlazeError):
    pass


class DuplicateState(KernelBlazeError):
    pass


class DuplicateOptimization(KernelBlazeError):
    pass


class UnknownState(KernelBlazeError):
    pass


class UnknownOptimization(KernelBlazeError):
    pass


class SchemaViolation(KernelBlazeError):
    pass


# profiles
class MalformedProfile(KernelBlazeError):
    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(f"row {row}: {message}" if row is not None else message)


class EmptyProfile(KernelBlazeError):
    pass


# policy
class EmptyCandidates(KernelBlazeError):
    pass


class EmptyProposal(KernelBlazeError):
    pass


# agents
class AgentUnavailable(KernelBlazeError):
    pass


class ScriptExhausted(AgentUnavailable):
    pass


class CredentialMissing(KernelBlazeError):
    pass


class MissingPlaceholder(KernelBlazeError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(name)


class ParseFailure(KernelBlazeError):
    pass


# harness / environment
class BackendError(KernelBlazeError):
    pass


class ShapeMismatch(KernelBlazeError):
    pass


class InvalidSpec(KernelBlazeError):
    pass


class UnknownVariant(KernelBlazeError):
    pass


class DepthTooLarge(KernelBlazeError):
    pass


# metrics
class EmptyResults(KernelBlazeError):
    pass


class UnsortedThresholds(KernelBlazeError):
    pass
