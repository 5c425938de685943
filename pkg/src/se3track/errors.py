"""Typed exceptions raised by the library.

Numerical routines never return NaN on a degenerate input; they raise one of
these instead so callers (in particular the episode runner) can classify the
failure.
"""


class Se3TrackError(Exception):
    """Base class for all library errors."""


class AngleNearPi(Se3TrackError):
    """Rotation logarithm requested within the branch-ambiguous zone at pi."""


class NotPSD(Se3TrackError):
    """A matrix that must be positive semidefinite failed Cholesky even after jitter."""


class DegenerateRange(Se3TrackError):
    """Target range too small for the inverse-square channel or angle extraction."""


class ShapeMismatch(Se3TrackError):
    """Inconsistent array shapes between waveform components."""


class PolarSingularity(Se3TrackError):
    """Target sits on the array z-axis; the polar-angle derivative is undefined."""


class AzimuthSingularity(Se3TrackError):
    """x = y = 0; the azimuth derivative is undefined."""


class SingularInnovation(Se3TrackError):
    """Innovation covariance is numerically singular."""


class IllConditioned(Se3TrackError):
    """An inverse needed by the bound recursion or the control chain is unreliable."""


class SchurViolation(Se3TrackError):
    """A homogenized constraint matrix that must be PSD is not."""


class Infeasible(Se3TrackError):
    """The control SDP has no strictly feasible point."""


class MaxIterations(Se3TrackError):
    """Iterative solver did not converge within its iteration budget."""


class NoFeasibleSample(Se3TrackError):
    """Gaussian randomization produced no constraint-satisfying control."""


class EpisodeFailed(Se3TrackError):
    """An episode aborted mid-trajectory; wraps the underlying cause."""


class AllEpisodesFailed(Se3TrackError):
    """Every Monte-Carlo episode failed; no aggregate statistics exist."""


class ConfigError(Se3TrackError):
    """Config file could not be parsed or contains invalid values."""
