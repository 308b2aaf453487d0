"""Exception hierarchy shared by every module of the package."""


class PelrecError(Exception):
    """Base class for all errors raised by pelrec."""


class ConfigurationError(PelrecError, ValueError):
    """Invalid parameters, mismatched shapes or inconsistent inputs."""


class BoundaryError(PelrecError, ValueError):
    """A subpixel sample needs intensities outside the frame."""


class InsufficientObservationsError(PelrecError):
    """Fewer valid rows than needed to pose the local regression."""


class SingularSystemError(PelrecError, ArithmeticError):
    """Normal equations are singular or too ill-conditioned to invert."""


class DegenerateComponentError(SingularSystemError):
    """A retained principal component has a (numerically) zero eigenvalue."""


class CalibrationError(PelrecError, ValueError):
    """Noise cannot be calibrated against a zero-variance frame."""


class EmptyDomainError(PelrecError, ValueError):
    """A reduction was requested over zero valid pixels."""


class InsufficientMembersError(PelrecError, ValueError):
    """A class has too few samples to estimate its covariance."""


class ZeroVarianceError(PelrecError, ValueError):
    """Samples carry no variance, so no principal direction exists."""


class FormatError(PelrecError, ValueError):
    """A file does not follow the expected binary or text layout."""
