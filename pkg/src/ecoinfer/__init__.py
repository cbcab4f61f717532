"""Ecological inference for aggregate election results.

Estimates the probability that an elector of a given age bracket (or of a
given first-round option) chose each option, from per-precinct marginals
only.
"""

__version__ = "0.1.0"

from .errors import EIError  # noqa: E402
from .model import (  # noqa: E402
    BracketPartition,
    CellBounds,
    CellProbabilityMatrix,
    OptionSet,
    PrecinctRecord,
    aggregate_padron,
    duncan_davis_bounds,
    validate_precinct,
)
from .estimators import (  # noqa: E402
    McmcConfig,
    PosteriorSummary,
    goodman_fit,
    holdout_validate,
    md_fit,
    weighted_average_fit,
)

__all__ = [
    "BracketPartition", "CellBounds", "CellProbabilityMatrix", "EIError", "McmcConfig",
    "OptionSet", "PosteriorSummary", "PrecinctRecord", "aggregate_padron", "duncan_davis_bounds",
    "goodman_fit", "holdout_validate", "md_fit", "validate_precinct", "weighted_average_fit",
]
