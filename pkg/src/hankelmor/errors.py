"""Exception classes shared across the package.

Each class carries an ``exit_code`` used by the command-line front end:
2 for configuration/shape errors, 3 for numerical failures, 4 for I/O.
"""


class ReductionError(Exception):
    exit_code = 1


# -- configuration and shape problems (exit 2) --------------------------------
class ConfigError(ReductionError, ValueError):
    exit_code = 2


class DimensionMismatch(ReductionError, ValueError):
    exit_code = 2


class PeriodMismatch(DimensionMismatch):
    pass


class ShapeMismatch(DimensionMismatch):
    pass


class ProjectorDimensionMismatch(DimensionMismatch):
    pass


# -- numerical failures (exit 3) ----------------------------------------------
class NumericalError(ReductionError, ArithmeticError):
    exit_code = 3


class UnstableSystem(NumericalError):
    pass


class DegenerateDraw(NumericalError):
    pass


class RankDeficient(NumericalError):
    pass


class RankExceeded(NumericalError):
    pass


class ZeroMatrix(NumericalError):
    pass


class BiorthogonalityFailure(NumericalError):
    pass


class IllConditioned(NumericalError):
    def __init__(self, message, condition_number=None):
        super().__init__(message)
        self.condition_number = condition_number


class SingularTransformation(NumericalError):
    pass


class SingularResolvent(NumericalError):
    pass


# -- I/O (exit 4) ---------------------------------------------------------------
class ArtifactIOError(ReductionError, OSError):
    exit_code = 4


class MissingArtifact(ArtifactIOError):
    pass


class MissingExponent(ReductionError, KeyError):
    """Raised when a Markov block at a required time exponent is absent."""

    exit_code = 2

    def __init__(self, exponent):
        super().__init__(f"Markov block for exponent k={exponent} is missing")
        self.exponent = exponent

    def __str__(self):
        return self.args[0]


class TruncationWarning(UserWarning):
    """Impulse-response horizon too short for the tail to have decayed."""
