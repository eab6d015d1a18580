"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class UnideconError(Exception):
    exit_code = 2


class ConfigurationError(UnideconError, ValueError):
    """Invalid model parameters or run configuration."""

    exit_code = 1


class DomainError(UnideconError, ValueError):
    """Input outside the domain where an operation is defined."""

    exit_code = 2


class DataError(UnideconError, ValueError):
    """Malformed or inconsistent input data (e.g. a bad CSV row)."""

    exit_code = 2


class AllMassInUnitInterval(DomainError):
    """No observation exceeds 1, so ``m_n`` is undefined.

    The likelihood then reduces to the current-status problem and callers
    should use :func:`unidecon.mle.cusum_pava_mle` on the transformed data.
    """


class NumericalError(UnideconError, ArithmeticError):
    exit_code = 3


class DegenerateLikelihoodError(NumericalError):
    """An interval probability ``F(R) - F(L)`` fell below the value floor."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class QuadratureError(NumericalError):
    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate
