"""Exception and warning types shared across aquameter."""

from __future__ import annotations

from dataclasses import dataclass


class AquameterError(Exception):
    """Base class for all data and validation failures."""


class ValidationError(AquameterError, ValueError):
    """An input value violates a documented invariant."""


class DegenerateMixError(ValidationError):
    """A fuel mix has no fuels or no positive generation."""


class MissingDataError(AquameterError, KeyError):
    """A lookup key (country, year, fuel, model, task...) cannot be resolved."""

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    def __str__(self) -> str:
        # KeyError would otherwise repr() the message
        return self.message


class ConfigError(AquameterError, ValueError):
    """Run configuration is invalid."""


@dataclass(frozen=True)
class Issue:
    source: str
    line: int
    reason: str

    def __str__(self) -> str:
        return f"{self.source}:{self.line}: {self.reason}"


class IngestError(ValidationError):
    """One or more rows of an input file failed validation.

    All offending rows are collected before raising so that a single run
    reports every problem in the file.
    """

    def __init__(self, issues: list[Issue]):
        self.issues = list(issues)
        lines = "\n".join(f"  {issue}" for issue in self.issues)
        super().__init__(f"{len(self.issues)} invalid row(s):\n{lines}")


class DataWarning(UserWarning):
    """Non-fatal data quality notice (empty input, excluded region, gaps)."""
