"""Quantify how much information a hypothesis test loses to missing data.

The package compares the posterior spread of a log likelihood-ratio-like
discrepancy computed from observed data against the extra spread induced by
data one could still collect, summarised by the relative-information
measures in :mod:`relinfo.measures`.  Two worked model families are
included: a household epidemic model (:mod:`relinfo.sir`) and monotone
polynomial regression (:mod:`relinfo.bernstein`).
"""

from .exceptions import (
    ChainInitializationError,
    ConfigError,
    DegenerateInformationError,
    DegenerateSeriesError,
    InsufficientNullDrawsError,
    InsufficientSamplesError,
    PluginNoiseWarning,
    RelinfoError,
    ToleranceNotMetWarning,
    ZeroLikelihoodRegionError,
)
from .measures import (
    ConditionalRatioSamples,
    ObservedLodSamples,
    RIResult,
    bi3,
    bi4,
    lod_variance,
    ratio_variance,
    ri_compute,
)
from .config import RunConfig
from .estimators import BernsteinMonotoneRegression, SirPosterior
from .report import Report, ScenarioResult

__version__ = "0.1.0"

__all__ = [
    "BernsteinMonotoneRegression",
    "ChainInitializationError",
    "ConditionalRatioSamples",
    "ConfigError",
    "DegenerateInformationError",
    "DegenerateSeriesError",
    "InsufficientNullDrawsError",
    "InsufficientSamplesError",
    "ObservedLodSamples",
    "PluginNoiseWarning",
    "RIResult",
    "RelinfoError",
    "Report",
    "RunConfig",
    "ScenarioResult",
    "SirPosterior",
    "ToleranceNotMetWarning",
    "ZeroLikelihoodRegionError",
    "bi3",
    "bi4",
    "lod_variance",
    "ratio_variance",
    "ri_compute",
    "__version__",
]
