"""Exception types shared across the solver."""


class MVDError(Exception):
    """Base class for all errors raised by this package."""


class LengthMismatch(MVDError, ValueError):
    pass


class StabilityViolation(MVDError, ValueError):
    """Raised when dt/h**2 exceeds 1/2 and the caller did not opt out."""


class FootOutOfCell(MVDError, ValueError):
    """Raised when dt > h, so the characteristic foot leaves its cell."""


class IndexOutOfRange(MVDError, IndexError):
    pass


class UnsupportedRule(MVDError, ValueError):
    pass


class DominanceViolation(MVDError, ValueError):
    pass


class UnknownProblem(MVDError, KeyError):
    pass


class MissingSnapshot(MVDError, KeyError):
    pass


class NonFiniteResult(MVDError, ArithmeticError):
    """A function evaluation produced NaN or Inf."""


class NonFiniteState(NonFiniteResult):
    """The discrete profile became non-finite during a time step.

    Attributes
    ----------
    level : int or None
        Time level being computed when the failure happened.
    node : int or None
        First offending age node.
    """

    def __init__(self, message, level=None, node=None):
        super().__init__(message)
        self.level = level
        self.node = node


class ParseError(MVDError, ValueError):
    """Malformed expression text.

    ``offset`` is the byte offset (UTF-8) of the offending token and
    ``expected`` a short description of what the parser wanted there.
    """

    def __init__(self, message, offset, expected=""):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset
        self.expected = expected


class UnknownVariable(ParseError):
    pass


class UnknownFunction(ParseError):
    pass


class MissingBinding(MVDError, KeyError):
    pass
