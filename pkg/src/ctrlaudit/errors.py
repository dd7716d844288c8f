"""Exception types shared across the audit harness."""
from __future__ import annotations


class AuditError(Exception):
    """Base class for all harness errors."""


class ManifestParseError(AuditError):
    """Structurally broken input file (wrong header, wrong column count)."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(AuditError):
    """Well-formed input that violates a domain invariant."""


class ConfigError(AuditError):
    """Bad configuration or unusable command-line invocation."""
