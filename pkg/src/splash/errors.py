"""Exception hierarchy shared by every module."""


class SplashError(Exception):
    """Base class for all errors raised by this package."""


class MissingKeyError(SplashError, KeyError):
    """A variable key was read or updated before being declared."""

    def __str__(self):
        return Exception.__str__(self)


class ShapeError(SplashError, ValueError):
    """Index/shape does not match the stored value kind."""


class NumericError(SplashError, ArithmeticError):
    """Non-finite input or numerically singular problem."""


class DomainError(SplashError, ValueError):
    """Argument outside its mathematical domain (e.g. gamma <= 0)."""


class UsageError(SplashError, RuntimeError):
    """API called in the wrong state or with out-of-range parameters."""


class FormatError(SplashError, ValueError):
    """A file does not follow its declared format."""


class DataError(SplashError, ValueError):
    """Well-formed input whose content is invalid."""


class ConfigError(SplashError, ValueError):
    """Invalid experiment configuration."""
