"""Exception hierarchy shared by all modules."""


class PoissonDtNError(Exception):
    """Base class for every error raised by this package."""


class NotElliptic(PoissonDtNError):
    pass


class BadModuli(PoissonDtNError):
    pass


class SingularSymbol(PoissonDtNError):
    pass


class OriginSingularity(PoissonDtNError):
    pass


class ConormalViolated(PoissonDtNError):
    pass


class NonpositiveTime(PoissonDtNError):
    pass


class UnsupportedRoute(PoissonDtNError):
    pass


class UnsupportedSystem(PoissonDtNError):
    pass


class BranchAmbiguity(PoissonDtNError):
    pass


class GridTooCoarse(PoissonDtNError):
    pass


class AliasingRisk(PoissonDtNError):
    pass


class PeriodizationRisk(PoissonDtNError):
    """Field is not negligible on the outermost grid layer."""


class KernelNotOdd(PoissonDtNError):
    pass


class KernelNotHomogeneous(PoissonDtNError):
    pass


class NoConvergence(PoissonDtNError):
    pass


class ConfigError(PoissonDtNError):
    def __init__(self, message, field=None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class TaskError(PoissonDtNError):
    pass


class UnknownCheck(PoissonDtNError):
    pass
