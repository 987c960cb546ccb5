"""Exception types shared across the package.

Every error carries a stable machine-readable ``code`` so the HTTP service and
the CLI can map failures without string matching.
"""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Violation:
    """One validation finding: a machine code, where it happened, and why."""

    code: str
    locus: str
    message: str

    def __str__(self) -> str:
        return f"[{self.code}] {self.locus}: {self.message}"


class VisannoError(Exception):
    """Base class for all package errors."""

    code = "error"


class ConfigurationError(VisannoError):
    code = "configuration"


class HierarchyParseError(VisannoError):
    """The hierarchy document is not even well-formed (bad syntax)."""

    code = "hierarchy-parse"


class HierarchyValidationError(VisannoError):
    """The document parsed but breaks hierarchy invariants; lists every violation."""

    code = "hierarchy-invalid"

    def __init__(self, violations: list[Violation]):
        self.violations = list(violations)
        detail = "; ".join(str(v) for v in self.violations)
        super().__init__(f"{len(self.violations)} violation(s): {detail}")


class NodeNotFoundError(VisannoError):
    code = "node-not-found"


class NotFoundError(VisannoError):
    code = "not-found"


class StateError(VisannoError):
    """An operation that is legal in general arrived in the wrong state."""

    code = "state"


class AnswerKindError(VisannoError):
    """The answer's kind does not fit the pending question."""

    code = "answer-kind"


class ReplayError(VisannoError):
    """An answer transcript cannot be replayed; ``position`` is 1-based."""

    code = "replay"

    def __init__(self, message: str, position: int):
        super().__init__(message)
        self.position = position


class IntegrityError(VisannoError):
    code = "integrity"


class ManifestError(VisannoError):
    """A manifest or detector file is malformed; ``line`` is 1-based."""

    code = "manifest"

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class InsufficientDataError(VisannoError):
    """No unit carries two or more values, so agreement is undefined."""

    code = "insufficient-data"


class DegenerateDataError(VisannoError):
    """All pairable values are identical (perfect homogeneity); alpha is undefined."""

    code = "degenerate-data"


class AuthorizationError(VisannoError):
    code = "unauthorized"
