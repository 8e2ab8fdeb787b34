"""Named error types raised across the package."""


class MagstepError(Exception):
    """Base class for all package errors."""


class NumericalError(MagstepError):
    """A numerical procedure failed (CLI exit code 3)."""


class ValidationError(MagstepError):
    """Inputs or results failed a validation check (CLI exit code 2)."""


class GridTooNarrow(NumericalError):
    """Eigenfunction has not decayed at the grid ends."""


class NonPositiveGroundState(NumericalError):
    """Computed ground state changes sign."""


class BracketingFailed(NumericalError):
    """No interior minimum was found in the scan window."""


class NonConvexAtMinimum(NumericalError):
    """Second derivative at the band minimum is not positive."""


class SingularSystem(NumericalError):
    """Deflated resolvent solve failed."""


class UnsupportedMoment(ValidationError):
    """Moment order outside the supported set."""


class InvariantViolation(ValidationError):
    """A structural invariant of a result failed."""


class SelfIntersection(ValidationError):
    """Curve is not embedded."""


NonEmbedded = SelfIntersection


class WellValidationFailed(ValidationError):
    """Curvature does not form a symmetric non-degenerate double well."""

    def __init__(self, message, n_maxima=None, degenerate=False):
        super().__init__(message)
        self.n_maxima = n_maxima
        self.degenerate = degenerate


class DegenerateCurvature(WellValidationFailed):
    """Curvature has no non-degenerate maxima (for example a circle)."""

    def __init__(self, message):
        super().__init__(message, n_maxima=0, degenerate=True)


class NegativePotential(ValidationError):
    """Effective potential has negative samples."""


class DegenerateConstants(ValidationError):
    """Edge constants make the effective potential vanish."""


class QuadratureNotConverged(NumericalError):
    """Quadrature error estimate above tolerance."""


class SymmetryViolation(ValidationError):
    """Profile is not even about its midpoint."""


class ConvergenceFailure(NumericalError):
    """Iterative eigensolver did not converge."""


class GapBelowNoiseFloor(NumericalError):
    """Spectral gap is not resolvable at working precision."""


class SingularStartFailure(NumericalError):
    """Local expansion at a well failed."""


class OrderNotAvailable(ValidationError):
    """Requested WKB order is not implemented."""


class GridMismatch(ValidationError):
    """Quasimode and operator grids differ."""


class WeightNotPositive(ValidationError):
    """Frenet weight is not positive on the grid."""


class GridGuardFailure(ValidationError):
    """Grid violates a configured guard."""


class ExtensionNotUnimodal(ValidationError):
    """Single-well curvature extension has spurious maxima."""


class FitIllConditioned(NumericalError):
    """Least-squares fit is ill-conditioned."""


class ConfigError(ValidationError):
    """Configuration file is invalid."""
