"""Exception hierarchy shared by all modules."""


class TomoError(Exception):
    """Base class for errors raised by nestedtomo."""


class InvalidArgument(TomoError, ValueError):
    pass


class NumericalFailure(TomoError, ArithmeticError):
    pass


class ConfigError(TomoError, ValueError):
    pass


class DegenerateInput(TomoError, ValueError):
    pass


class EmptyNeighborhood(TomoError, ValueError):
    pass
