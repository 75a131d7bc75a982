"""Exception hierarchy shared by the solvers and the command line."""


class MagmaError(Exception):
    """Base class for all package errors."""


class ConfigError(MagmaError, ValueError):
    """Invalid domain descriptor, parameter set or run configuration."""


class QuadratureError(MagmaError):
    """A quadrature did not reach its requested tolerance."""


class SingularIntegrandError(MagmaError, ValueError):
    """An integrand needs u* > 0 (negative powers) but u* vanishes somewhere."""


class SolverError(MagmaError):
    """A nonlinear solve or time integration failed to produce a result."""


class NewtonDivergence(SolverError):
    pass


class ConvexityLoss(SolverError):
    pass


class StarDegeneracy(SolverError):
    pass


class TimeStepUnderflow(SolverError):
    pass


class ContinuationStall(SolverError):
    pass


class ShootingError(SolverError):
    pass
