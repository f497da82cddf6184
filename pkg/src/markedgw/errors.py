"""Exception hierarchy shared by every module of the package."""


class MarkedGWError(Exception):
    """Base class for all errors raised by markedgw."""


# trees
class InvalidTree(MarkedGWError, ValueError):
    pass


class MissingParent(InvalidTree):
    pass


class ContiguityViolation(InvalidTree):
    pass


class MarkedLeafAtHorizon(InvalidTree):
    pass


class HorizonExceedsTree(MarkedGWError, ValueError):
    pass


# laws
class InvalidLaw(MarkedGWError, ValueError):
    pass


class NotAProbability(InvalidLaw):
    pass


class Degenerate(InvalidLaw):
    pass


class NoMarkPossible(InvalidLaw):
    pass


class UnsupportedInfiniteSupport(MarkedGWError, ValueError):
    pass


class OrderTooLarge(MarkedGWError, ValueError):
    pass


# moments / regimes
class WrongCriticality(MarkedGWError, ValueError):
    pass


class NotSubcritical(WrongCriticality):
    pass


class RegimeMismatch(MarkedGWError, ValueError):
    pass


class InconsistentMasses(MarkedGWError, ValueError):
    pass


class TooManyTypeVectors(MarkedGWError, RuntimeError):
    pass


class NotNormalizable(MarkedGWError, ArithmeticError):
    pass


# sampling / enumeration budgets
class NodeBudgetExceeded(MarkedGWError, RuntimeError):
    pass


class StateSpaceTooLarge(MarkedGWError, RuntimeError):
    pass
