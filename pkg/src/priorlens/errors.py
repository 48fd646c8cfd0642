"""Exception and warning types raised across the package."""


class PriorLensError(Exception):
    """Base class for all package errors."""


class SingularMatrix(PriorLensError, ArithmeticError):
    """A matrix expected to be positive definite has a vanishing pivot."""


class DimMismatch(PriorLensError, ValueError):
    pass


class UnknownPattern(PriorLensError, ValueError):
    pass


class NonFinite(PriorLensError, ArithmeticError):
    pass


class NoConvergence(PriorLensError, RuntimeError):
    pass


class NotInterior(PriorLensError, ValueError):
    """An iterate or probe left the interior of the parameter domain."""


class OutOfDomain(PriorLensError, ValueError):
    """A closed-form integral is improper for the given arguments."""


class ImproperPrior(PriorLensError, ValueError):
    pass


class NoExpectationPath(PriorLensError, NotImplementedError):
    pass


class DegenerateEstimate(PriorLensError, ArithmeticError):
    pass


class UnstableWeights(PriorLensError, ArithmeticError):
    pass


class AllRejected(PriorLensError, RuntimeError):
    pass


class ConfigError(PriorLensError, ValueError):
    pass


class DivergenceWarning(UserWarning):
    """A grid minimizer sits on the grid boundary; the optimum may run away."""
