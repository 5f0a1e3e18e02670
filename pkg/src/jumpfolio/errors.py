"""Exception hierarchy for the jumpfolio package."""


class JumpfolioError(Exception):
    """Base class for all package errors."""


class ConfigError(JumpfolioError):
    """Malformed or inconsistent configuration input."""


class OffGrid(JumpfolioError):
    """A time argument does not coincide with a grid node."""


class OutOfRange(JumpfolioError):
    """A probability or parameter lies outside its admissible range."""


class SingularSigma(JumpfolioError):
    """Volatility matrix is singular (or below the determinant floor)."""


class UnsupportedSupport(JumpfolioError):
    """Jump-size support leaves (-1, inf), or 1 + pi*z is not positive."""


class MomentDiverges(JumpfolioError):
    """An exponential jump moment is not finite."""


class DriftBelowRate(JumpfolioError):
    """Some asset drift falls below the riskless rate where required."""


class NoConvergence(JumpfolioError):
    """Fixed-point iteration did not converge within the iteration budget."""


class KappaOutOfRange(JumpfolioError):
    """Loss fraction kappa outside the admissible range of the solver."""


class ConditionViolated(JumpfolioError):
    """A sufficient condition required by a closed-form result fails."""


class AssumptionJViolated(JumpfolioError):
    """Negative jump sizes present where nonnegative jumps are required."""


class ThetaHatNegative(JumpfolioError):
    """Compensated market price of risk has a negative component."""


class NegativeJumpsPresent(JumpfolioError):
    """Negative jumps present and no adjustment method selected."""


class EpsilonTooLarge(JumpfolioError):
    """Negative-jump probability is too large for the level adjustment."""


class InvalidStrategy(JumpfolioError):
    """Strategy violates admissibility (box constraint, signs, shapes)."""


class EmptyFeasibleSet(JumpfolioError):
    """No candidate on the search grid satisfies the risk constraint."""
