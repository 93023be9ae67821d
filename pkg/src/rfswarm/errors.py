"""Exception and warning types shared across the package."""


class RfswarmError(Exception):
    """Base class for all solver and model errors raised by rfswarm."""


class DimensionMismatch(RfswarmError):
    """Array arguments have inconsistent shapes."""


class NonPositiveInput(RfswarmError):
    """A strictly positive scalar argument was zero or negative."""


class NotHurwitz(RfswarmError):
    """Matrix has an eigenvalue with nonnegative real part."""


class NotSchurStable(RfswarmError):
    """Matrix has spectral radius at or above one."""


class SingularPencil(RfswarmError):
    """Sylvester operator is singular (eigenvalue sum near zero)."""


class NonFinite(RfswarmError):
    """A computation produced inf or NaN."""


class NotPositiveDefinite(RfswarmError):
    """Covariance or curvature matrix failed a positive-definiteness check."""


class RegularizationExhausted(RfswarmError):
    """Backward pass could not make the control Hessian positive definite."""


class LineSearchFailed(RfswarmError):
    """No backtracking step produced a cost decrease."""


class Unstable(RfswarmError):
    """Feedback gain does not stabilize the closed loop."""


class RiccatiFailed(RfswarmError):
    """Algebraic Riccati equation could not be solved."""


class NoStabilizingGain(RfswarmError):
    """No stabilizing initial gain is available for the synthesis."""


class PatternDestabilizes(RfswarmError):
    """Projecting a gain onto a sparsity pattern destroys stability."""


class ConfigError(RfswarmError):
    """Scenario configuration is malformed or violates an invariant."""


class StallWarning(UserWarning):
    """Iteration returned its best iterate without meeting its tolerance."""


class AdmmMaxIterWarning(UserWarning):
    """ADMM hit its iteration cap before the stopping rule was met."""
