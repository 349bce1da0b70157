"""Exception types shared across the package."""


class IgscError(Exception):
    """Base class for errors raised by this package."""


class ShapeError(IgscError, ValueError):
    """Operands have incompatible shapes."""


class FormatError(IgscError, ValueError):
    """A file does not match its documented binary or JSON layout."""


class ValidationError(IgscError, ValueError):
    """A dataset, config, or parameter set violates an invariant."""


class UsageError(IgscError, ValueError):
    """An operation was called with arguments that make no sense."""


class NumericError(IgscError, ArithmeticError):
    """A computation produced a non-finite value."""
