"""Custom exceptions for the relay-based synchronization simulator."""

from pathlib import Path


class RbssError(Exception):
    """Base exception for relay-based synchronization errors."""


class DecodeError(RbssError):
    """Raised when a serialized CRDT state cannot be decoded."""


class TraceParseError(RbssError):
    """Raised when a contact trace or application scenario line is malformed."""

    def __init__(
        self, message: str, path: str | Path | None = None, line: int = 0
    ) -> None:
        """Keep the location of the offending line."""
        self.path = path
        self.line = line
        where = f"{path or '<input>'}:{line}" if line else (path or "<input>")
        super().__init__(f"{where}: {message}")


class ScenarioError(RbssError):
    """Raised when a scenario refers to dead or unknown nodes."""


class InvariantViolation(RbssError):  # noqa: N818
    """Raised when a protocol or store invariant does not hold."""

    def __init__(self, invariant: str, detail: str) -> None:
        """Keep the name of the violated invariant."""
        self.invariant = invariant
        self.detail = detail
        super().__init__(f"{invariant}: {detail}")


class SelectionError(RbssError):
    """Raised when the inflator selection cannot cover its target."""


class GenerationError(RbssError):
    """Raised when a mobility or scenario generator gets unusable input."""


class UsageError(RbssError):
    """Raised for invalid command line usage or configuration."""
