"""Exception types shared across the package."""


class ContractError(ValueError):
    """An argument violates a documented precondition."""


class ConjugateError(RuntimeError):
    """A numeric conjugate evaluation failed to converge.

    ``best_lower_bound`` is the largest value of ``<x, y> - f(x)`` seen
    before giving up; the true conjugate is at least this large.
    """

    def __init__(self, message, best_lower_bound=float("-inf"), direction=None):
        super().__init__(message)
        self.best_lower_bound = best_lower_bound
        self.direction = direction


class ProxError(RuntimeError):
    """A numeric proximal solve did not reach its optimality tolerance."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class OracleError(RuntimeError):
    """A reference solution could not be computed (e.g. resonant data)."""


class ConfigError(ValueError):
    """A run configuration is malformed or references unsupported kinds."""


class SolverError(RuntimeError):
    """No feasible starting path could be found."""
