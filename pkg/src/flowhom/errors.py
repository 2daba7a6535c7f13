"""Exception hierarchy shared by all flowhom modules."""


class FlowhomError(Exception):
    """Base class for every error raised by the package."""


class IntegrationError(FlowhomError):
    """ODE integration failed; ``last_state`` holds the last accepted state."""

    def __init__(self, message, last_state=None, last_time=None):
        super().__init__(message)
        self.last_state = last_state
        self.last_time = last_time


class ResolutionError(FlowhomError):
    """Quadrature too coarse for the declared highest frequency."""


class UnsupportedClassError(FlowhomError):
    """Operation is not defined for the declared signal class."""


class ClassContractError(FlowhomError):
    """A signal does not behave as its declared class requires."""


class AliasingError(FlowhomError):
    """Nodal grid cannot represent the requested Fourier cutoff."""


class NotSolenoidalError(FlowhomError):
    """Vector field is required to be divergence free."""


class NotMeanZeroError(FlowhomError):
    """Field is required to have zero torus mean."""


class CompatibilityError(FlowhomError):
    """Right-hand side of a torus elliptic problem has nonzero mean."""


class ConvergenceError(FlowhomError):
    """Iterative solver did not reach its tolerance."""


class CoercivityError(FlowhomError):
    """Diffusion matrix violates its declared ellipticity bounds."""


class ResidualError(FlowhomError):
    """Refused to use a solution whose residual exceeds tolerance."""


class NonConvergentMeanError(FlowhomError):
    """Window averages did not settle to a mean value."""


class UnboundedJacobianError(FlowhomError):
    """Flow Jacobian grows without bound along the sampled orbit."""


class CFLError(FlowhomError):
    """Explicit convection step violates the stability restriction."""


class LinearSolveError(FlowhomError):
    """Implicit linear solve failed."""


class IndefiniteTensorError(FlowhomError):
    """Symmetric part of a diffusion tensor is not positive definite."""


class CoverageError(FlowhomError):
    """Requested evaluation region leaves the solution grid."""


class ConfigError(FlowhomError):
    """Scenario configuration failed validation."""

    def __init__(self, message, line=None, column=None):
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + where)
        self.line = line
        self.column = column
