"""Exception types shared across the package."""


class LstarfError(Exception):
    """Base class for errors raised by lstarf."""


class NumericalFailure(LstarfError, ArithmeticError):
    """An iterative kernel failed to converge or produced non-finite values."""


class InfeasibleInputError(LstarfError, ValueError):
    """Input violates the membership precondition of a lemma check."""


class NotCertifiable(LstarfError):
    """A check needs an exact isometry constant but only an estimate exists."""
