"""Exception types shared across the package.

Validation-style errors (bad config, bad input files, insufficient data)
derive from :class:`PrbcastValueError`; runtime failures during numerics
derive from :class:`PrbcastRuntimeError`. The CLI maps the first family to
exit code 1 and the second to exit code 2.
"""
from __future__ import annotations


class PrbcastValueError(ValueError):
    pass


class PrbcastRuntimeError(RuntimeError):
    pass


class ConfigError(PrbcastValueError):
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class SizingError(PrbcastValueError):
    def __init__(self, required: int, available: int, what: str = "series"):
        self.required = required
        self.available = available
        super().__init__(
            f"{what} too short: requires {required} samples, {available} available"
        )


class ParseError(PrbcastValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class ValidationError(PrbcastValueError):
    pass


class DomainError(PrbcastValueError):
    pass


class ShapeError(PrbcastValueError):
    pass


class ContractError(PrbcastValueError):
    pass


class DegenerateScaleError(PrbcastValueError):
    pass


class NumericError(PrbcastRuntimeError, ArithmeticError):
    pass


class StateError(PrbcastRuntimeError):
    pass
