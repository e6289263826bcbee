"""Exception hierarchy shared by every stochpath module."""


class StochPathError(Exception):
    """Base class for all library errors."""


class NotProper(StochPathError):
    pass


class NoConvergence(StochPathError):
    pass


class SingularSystem(StochPathError):
    pass


class EnumLimitExceeded(StochPathError):
    pass


class BadDistribution(StochPathError):
    pass


class BadConfig(StochPathError):
    pass


class BadParams(StochPathError):
    pass


class ProtocolViolation(StochPathError):
    pass


class BudgetExceeded(StochPathError):
    pass


class StepCapExceeded(StochPathError):
    pass


class EpisodeNotStarted(StochPathError):
    pass


class DegenerateFit(StochPathError):
    pass


class DoublingCapExceeded(StochPathError):
    """The adaptive scale loop hit its defensive doubling cap."""
