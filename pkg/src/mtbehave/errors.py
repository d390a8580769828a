"""Exception hierarchy shared across the package.

CLI exit codes map onto this hierarchy: ConfigError -> 1,
ProviderError (and subclasses) -> 2, DataInvariantError -> 3.
"""
from __future__ import annotations


class MtBehaveError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(MtBehaveError):
    """Invalid configuration or command usage."""


class ProviderError(MtBehaveError):
    """An LLM or embedding provider failed (after retries)."""


class AdapterError(ProviderError):
    """An MT system adapter failed (after retries)."""


class MaxBatchesExceededError(ProviderError):
    """Suite generation hit the batch safety cap before reaching its target."""


class UnanswerableValueError(MtBehaveError):
    """The LLM declined a candidate-generation request by answering "NA"."""

    def __init__(self, value: str, side: str = "") -> None:
        self.value = value
        self.side = side
        detail = f" ({side})" if side else ""
        super().__init__(f"candidate generation for value {value!r} answered NA{detail}")


class EmptyAfterParseError(MtBehaveError):
    """A candidate response parsed to an empty set."""


class DataInvariantError(MtBehaveError):
    """A domain invariant was violated by loaded or constructed data."""


class SuiteLoadError(DataInvariantError):
    """A serialized file could not be parsed; message carries path and line."""


class BracketParseError(MtBehaveError, ValueError):
    """A generated line could not be parsed into a single bracketed value."""

    reason = "parse_error"

    def __init__(self, raw: str) -> None:
        self.raw = raw
        super().__init__(f"{self.reason}: {raw!r}")


class NoValueError(BracketParseError):
    reason = "no_value"


class MultipleValuesError(BracketParseError):
    reason = "multi_value"


class UnbalancedBracketsError(BracketParseError):
    reason = "unbalanced"


class EmptyValueError(BracketParseError):
    reason = "empty_value"
