"""
Error hierarchy of the package. Every error raised on purpose derives from
TDSStabError so that the command line front end can map it to an exit code.
"""


class TDSStabError(Exception):
    """Root of all errors raised by tdsstab."""


class ConfigurationError(TDSStabError, ValueError):
    """Invalid tolerance or option value."""


class ShapeError(TDSStabError, ValueError):
    """Matrices or vectors with inconsistent dimensions."""


class PreconditionError(TDSStabError, ValueError):
    """An operation was called outside of its documented domain."""


class ConvergenceError(TDSStabError, ArithmeticError):
    """An eigen-iteration or a Jordan chain extraction did not converge."""


class NotInvariantError(TDSStabError):
    """A subspace is not invariant under all of the given matrices."""


class NoDecomposition(TDSStabError):
    """No common invariant subspace was found by the enumeration."""


class InterpolationError(TDSStabError, ArithmeticError):
    """The determinant of the delay pencil vanishes identically."""


class CrossingSweepError(TDSStabError, ArithmeticError):
    """The frequency grid is too coarse to resolve an imaginary-axis crossing."""


class DegenerateCrossing(TDSStabError):
    """
    The crossing direction at an imaginary-axis root cannot be determined, usually
    because the root is repeated. Decomposing the system resolves this.
    """

    def __init__(self, omega, tau=None, message=None):
        self.omega = float(omega)
        self.tau = None if tau is None else float(tau)
        if message is None:
            message = (
                "degenerate crossing at omega = {:.6g}: root tendency cannot be "
                "determined; decompose the system first".format(self.omega)
            )
        super().__init__(message)


class StabilityInconsistency(TDSStabError, ArithmeticError):
    """The unstable-root count would become negative."""


class WEliminationError(TDSStabError):
    """Conjugate elimination is not applicable or inconclusive."""


class SingularPlacement(TDSStabError):
    """The pole placement equations have no unique solution."""


class IntegrationError(TDSStabError, ArithmeticError):
    """The DDE integration was rejected or diverged."""

    def __init__(self, message, t_blowup=None):
        self.t_blowup = t_blowup
        super().__init__(message)


class SystemFileError(TDSStabError):
    """A system description file could not be loaded."""

    def __init__(self, message, field=None, exit_code=4):
        self.field = field
        self.exit_code = exit_code
        super().__init__(message)
