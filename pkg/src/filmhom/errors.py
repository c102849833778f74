"""Exception taxonomy shared by all modules.

Exit-code mapping used by the CLI: configuration errors -> 2, resolution
errors -> 3, solver non-convergence -> 4, structural inconsistency -> 5.
"""


class FilmhomError(Exception):
    """Base class for all package errors."""


class ConfigurationError(FilmhomError):
    """Invalid configuration: bad parameters, violated hypotheses, bad files."""


class DimensionMismatchError(ConfigurationError):
    """Matrix or grid dimensions inconsistent with the declared problem size."""


class ResolutionError(FilmhomError):
    """Grid too coarse to resolve the requested microstructure.

    Attributes
    ----------
    required : int
        Minimum number of cells that would satisfy the resolution rule.
    axis : int
        Axis on which the rule failed.
    """

    def __init__(self, message, required=None, axis=None):
        super().__init__(message)
        self.required = required
        self.axis = axis


class SolverConvergenceError(FilmhomError):
    """Raised by drivers that require a converged solve and did not get one."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class StructuralInconsistencyError(FilmhomError):
    """Geometric and energetic kernel verdicts disagree (grid too coarse).

    Carries both verdicts so the caller can see what clashed.
    """

    def __init__(self, message, geometric=None, energetic=None):
        super().__init__(message)
        self.geometric = geometric
        self.energetic = energetic


class QuadratureError(FilmhomError):
    """Adaptive quadrature failed to meet its tolerance.

    Attributes carry the best estimate and the refinement history so a
    caller can still inspect partial results.
    """

    def __init__(self, message, best_estimate=None, history=None):
        super().__init__(message)
        self.best_estimate = best_estimate
        self.history = history or []


class UnsupportedFeatureError(FilmhomError):
    """Requested a feature outside the supported v1 surface."""
