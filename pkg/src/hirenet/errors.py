"""Exception hierarchy shared across the toolkit."""


class HirenetError(Exception):
    """Base class for all toolkit errors."""


class InputError(HirenetError, ValueError):
    """Bad input data or configuration (CLI exit code 2)."""


class LoadError(InputError):
    """Malformed node or edge table."""


class UndefinedStatisticError(HirenetError, ValueError):
    """A statistic is undefined for the given graph (e.g. zero variance)."""


class NumericalError(HirenetError, ArithmeticError):
    """Numerical failure (CLI exit code 3)."""


class ConvergenceError(NumericalError):
    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


class DivergenceError(NumericalError):
    """MCMC log-likelihood became non-finite."""
