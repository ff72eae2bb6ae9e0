"""Exception hierarchy shared by the solvers, the estimation code and the CLI."""


class ThermInvError(Exception):
    """Base class for all package errors."""


class ConfigurationError(ThermInvError, ValueError):
    """Invalid physical or numerical configuration."""


class DomainError(ThermInvError, ValueError):
    """Argument outside the domain of an operation."""


class EvaluationError(ThermInvError, ArithmeticError):
    """A property law left its validity range during a solve."""


class SolverError(ThermInvError, RuntimeError):
    """Time integration failed.

    Parameters
    ----------
    message : str
    tau : float, optional
        Dimensionless time (or physical time for the 2D solver) at failure.
    """

    def __init__(self, message, tau=None):
        super().__init__(message)
        self.tau = tau


class DivergenceError(SolverError):
    """Non-finite value produced by the explicit 2D scheme."""

    def __init__(self, message, step=None, tau=None):
        super().__init__(message, tau=tau)
        self.step = step


class UnidentifiableError(ThermInvError, ValueError):
    """Fisher information is zero along a parameter direction."""


class IngestionError(ThermInvError, ValueError):
    """Measurement files are inconsistent (misaligned grids, missing columns)."""


class AemBuildError(ThermInvError, RuntimeError):
    """Too many forward solves failed while building the error model."""
