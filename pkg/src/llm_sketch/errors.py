"""Exception types shared across the package."""

from __future__ import annotations

from typing import Any


class SketchError(Exception):
    """Base class for every error raised by llm_sketch."""


class ParseError(SketchError, ValueError):
    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)


class DuplicateKeyError(ParseError):
    pass


class SchemaError(SketchError, ValueError):
    """A schema document violates a structural invariant."""


class UnsupportedSchema(SketchError):
    """The schema uses keywords outside the modeled subset."""

    def __init__(self, keywords: list[str], message: str | None = None):
        self.keywords = list(keywords)
        super().__init__(message or f"unsupported schema keywords: {', '.join(self.keywords)}")


class UnknownSchema(SketchError, KeyError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(name)

    def __str__(self) -> str:
        return f"unknown task schema: {self.name!r}"


class InstanceInvalid(SketchError):
    def __init__(self, report: Any, message: str = "task instance does not satisfy its schema"):
        self.report = report
        super().__init__(message)


class BadOutputFormat(SketchError):
    pass


class EmptyInput(SketchError, ValueError):
    pass


class StateBlowup(SketchError):
    pass


class IllegalToken(SketchError):
    pass


class LengthExceeded(SketchError):
    def __init__(self, tokens: list[int], message: str = "maxTokens reached before an accepting EOS"):
        self.tokens = tokens
        super().__init__(message)


class BackendError(SketchError):
    pass


class FormatFailure(SketchError):
    def __init__(self, outcome: Any, message: str = "output failed validation after all attempts"):
        self.outcome = outcome
        super().__init__(message)


class EmptyBatch(SketchError, ValueError):
    pass


class PoolTooSmall(SketchError, ValueError):
    pass
