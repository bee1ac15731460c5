"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: parse/data problems exit 2,
shape/configuration problems exit 3, training divergence exits 4.
"""

from __future__ import annotations


class AvsqueezeError(Exception):
    """Base class for all package errors."""


class DimensionError(AvsqueezeError):
    """Operand shapes are incompatible; message names both shapes."""


class ContractError(AvsqueezeError):
    """A documented precondition was violated (empty stream, zero stride, ...)."""


class InputError(AvsqueezeError):
    """Input data is unusable (non-finite values, wrong dtype semantics)."""


class ConfigurationError(AvsqueezeError):
    """Config fields are inconsistent with each other or with the data."""


class ParseError(AvsqueezeError):
    """A file could not be parsed. Carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ManifestError(AvsqueezeError):
    """A QA manifest violates its invariants (duplicate ids, missing fields)."""


class TrainingDivergenceError(AvsqueezeError):
    """Training produced a non-finite loss. Carries the offending step."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"loss became non-finite at step {step}")
