"""Exception types shared across the package.

The hierarchy mirrors how failures are reported at the command line:
schema/validation problems (exit code 1), numerical failures such as
separation or non-convergence (exit code 2), and configuration errors
(exit code 3).
"""


class SvyTransportError(Exception):
    """Base class for all package errors."""


class SchemaError(SvyTransportError):
    """A required column or role is missing from an input file."""


class ValidationError(SvyTransportError):
    """Input data violate a dataset invariant (bad weight, non-binary treatment, ...)."""


class ConfigError(SvyTransportError):
    """A configuration file or option is malformed or inconsistent."""


class NumericalError(SvyTransportError):
    """Base class for failures of a numerical procedure."""


class SeparationError(NumericalError):
    """The membership model is perfectly (or quasi-perfectly) separated.

    Carries the name of a separating covariate when one can be identified.
    """

    def __init__(self, message, covariate=None):
        super().__init__(message)
        self.covariate = covariate


class RankDeficiencyError(NumericalError):
    """The design matrix is rank deficient; lists the collinear columns."""

    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class ConvergenceError(NumericalError):
    """An iterative fit did not reach its tolerance within the iteration cap."""

    def __init__(self, message, iterations=None, score_norm=None):
        super().__init__(message)
        self.iterations = iterations
        self.score_norm = score_norm


class EstimationError(NumericalError):
    """An estimator cannot be formed (empty weighted arm, undefined SE, ...)."""
