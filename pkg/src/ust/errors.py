"""Exception types shared across the package."""

from __future__ import annotations


class UstError(Exception):
    """Base class for all package errors."""


class InvalidSpecError(UstError):
    """A toy-world spec violates its invariants."""


class UnknownWordError(UstError):
    def __init__(self, word: str):
        super().__init__(f"word not in lexicon: {word!r}")
        self.word = word


class IoError(UstError):
    """File missing or unreadable."""


class MalformedError(UstError):
    """A structured file failed to parse."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class TooFewPointsError(UstError):
    """Fewer samples than clusters requested."""


class DimMismatchError(UstError):
    """Vector dimensions disagree."""


class ShapeMismatchError(UstError):
    """Tensor shapes disagree."""


class NonFiniteLossError(UstError):
    """A loss component became NaN or infinite."""

    def __init__(self, loss_name: str, diagnostics: dict | None = None):
        super().__init__(f"non-finite loss: {loss_name} (diagnostics: {diagnostics})")
        self.loss_name = loss_name
        self.diagnostics = diagnostics or {}


class SchemaMismatchError(UstError):
    """Checkpoint parameter trees have different names or shapes."""


class EmptyReferenceError(UstError):
    """Edit rate against an empty reference is undefined."""


class LengthMismatchError(UstError):
    """Corpus-level metric called with different numbers of hyps and refs."""


class EmptyCorpusError(UstError):
    """A corpus yielded no n-grams."""


class GoldDataError(UstError):
    """Gold (evaluation-only) data was requested inside a training stage."""


class ConfigError(UstError):
    """Invalid or unknown configuration."""


class StageError(UstError):
    """A pipeline stage failed; wraps the causing exception."""
