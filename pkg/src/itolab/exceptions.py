"""Exception and warning types raised across the package."""


class ItoLabError(Exception):
    """Base class for all package errors."""


class ConfigError(ItoLabError, ValueError):
    """Invalid or incomplete configuration."""


class TruncationError(ItoLabError):
    """Quadrature truncation leaves too much spectral mass outside the domain."""


class ProbeError(ItoLabError, ValueError):
    """A probe request falls outside the lattice or violates a test hypothesis."""


class TailError(ItoLabError):
    """Series truncation cannot meet the requested tail tolerance."""


class StabilityError(ItoLabError, ValueError):
    """Time step violates the positivity bound of the explicit kinetic scheme."""


class SingularTime(ItoLabError, ValueError):
    """Density requested at a time below the configured floor."""


class NegativeVariance(ItoLabError):
    """Numerical second moment dips below the ballistic decay term."""


class CovarianceError(ItoLabError):
    """Increment covariance has a PSD defect larger than tolerated."""


class SampleSizeError(ItoLabError, ValueError):
    """Too few trajectories for the requested statistical test."""


class DegenerateError(ItoLabError, ValueError):
    """Reference variance is zero; the distributional test is meaningless."""


class ChecksumError(ItoLabError):
    """A data file does not match the checksum recorded in its manifest."""


class AliasingWarning(UserWarning):
    """Spectral density is not negligible at the lattice Nyquist mode."""
