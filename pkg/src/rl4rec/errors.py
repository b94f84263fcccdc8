"""Exception types shared across the package.

The CLI maps :class:`ValidationError` (and subclasses) to exit code 1 and
:class:`NumericError` to exit code 2.
"""


class ValidationError(ValueError):
    """Bad input, bad configuration, or a violated precondition."""


class ConfigError(ValidationError):
    pass


class DimensionError(ValidationError):
    pass


class DomainError(ValidationError):
    """An id or value outside its allowed range."""


class ContractError(ValidationError):
    pass


class ParseError(ValidationError):
    pass


class ProtocolError(RuntimeError):
    """Environment used out of order (repeat action, step after done)."""


class ExhaustionError(RuntimeError):
    pass


class NumericError(ArithmeticError):
    """Non-finite loss, gradient, or objective."""
