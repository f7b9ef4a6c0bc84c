"""Exception hierarchy.

Two top-level families, matching the CLI exit-code contract:
precondition/configuration problems (exit 2) and numerical failures
encountered mid-run (exit 3).
"""


class LorenzLabError(Exception):
    """Base class for all package errors."""


class PreconditionError(LorenzLabError):
    """Invalid input, parameter, or violated operation precondition."""


class ConfigError(PreconditionError):
    """Malformed configuration: unknown keys, missing blocks, bad values."""


class DegenerateSpectrumError(PreconditionError):
    """Equilibrium spectrum has a repeated or zero eigenvalue."""


class NotLorenzLikeError(PreconditionError):
    """Eigenvalues do not satisfy the saddle ordering lam2 < lam3 < 0 < -lam3 < lam1."""


class NumericalError(LorenzLabError):
    """Numerical failure during a run."""


class IntegrationError(NumericalError):
    """Integrator failed (step-size underflow); carries the last good sample."""

    def __init__(self, message, last_time=None, last_state=None):
        super().__init__(message)
        self.last_time = last_time
        self.last_state = last_state


class FrameCollapseError(NumericalError):
    """Tangent frame became numerically degenerate between renormalizations."""


class SingularLineError(NumericalError):
    """Point on (or indistinguishably close to) the singular line x = 0."""
