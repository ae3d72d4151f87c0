"""Errors and warnings raised across the package."""


class RelinfoError(Exception):
    """Base class for all package-specific errors."""


class InsufficientSamplesError(RelinfoError):
    """Too few Monte Carlo draws to form the requested estimate."""


class DegenerateInformationError(RelinfoError):
    """Observed and conditional likelihoods are both flat (0/0 ratio).

    Raised instead of silently returning a convention value, because a flat
    pair of likelihoods means the draws carry no information about the
    quantity at all and any ratio would be an artifact.
    """


class InsufficientNullDrawsError(RelinfoError):
    """Not enough posterior draws fell in the null region."""


class DegenerateSeriesError(RelinfoError):
    """A diagnostic was requested on a constant series."""


class ZeroLikelihoodRegionError(RelinfoError):
    """Every importance-sampling proposal landed outside the support."""


class ChainInitializationError(RelinfoError):
    """The sampler could not construct a starting point with positive density."""


class ConfigError(RelinfoError):
    """A run configuration file failed validation."""


class PluginNoiseWarning(UserWarning):
    """Per-draw log-likelihood standard errors are large relative to their spread.

    Plug-in variance estimates are inflated by estimation noise; results may
    overstate the variance of the observed-data log likelihood.
    """


class ToleranceNotMetWarning(UserWarning):
    """An adaptive Monte Carlo estimate hit its sample cap above the target se."""
