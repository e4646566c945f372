"""Exception types raised by the library."""


class RobustConsensusError(Exception):
    """Base class for all library errors."""


class ConfigError(RobustConsensusError, ValueError):
    """Inconsistent or invalid configuration."""


class NonConvergence(RobustConsensusError, ArithmeticError):
    """An iterative solver did not reach its tolerance."""


class InfeasibleGamma(RobustConsensusError, ValueError):
    """The requested gamma is below the certifiable bound.

    ``gamma_min`` carries the smallest gamma the certificate accepts.
    """

    def __init__(self, gamma: float, gamma_min: float):
        self.gamma = gamma
        self.gamma_min = gamma_min
        super().__init__(f"gamma={gamma:.6g} is below the certifiable bound 1/c_N={gamma_min:.6g}")


class DegenerateBound(RobustConsensusError, ArithmeticError):
    """The closed-form gamma bound has a non-positive denominator."""


class UnstableSystem(RobustConsensusError, ValueError):
    """A state matrix has an eigenvalue with non-negative real part."""


class SingularMiddleBlock(RobustConsensusError, ArithmeticError):
    """``-gamma I + D^T D / gamma`` is not invertible."""


class EmptyInput(RobustConsensusError, ValueError):
    """No samples were supplied."""
