"""Estimators of the bracket x option probability matrix."""
from __future__ import annotations

from ..errors import ValidationError
from .goodman import GoodmanResult, goodman_fit, goodman_regression
from .mcmc import McmcConfig, PosteriorSummary, md_fit, md_fit_arrays
from .weighted import weighted_average_arrays, weighted_average_fit

METHODS = ("weighted_average", "goodman", "md")


def check_method(method: str) -> str:
    if method not in METHODS:
        raise ValidationError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    return method


def fit(records, partition, options, method="md", config=None):
    """Run ``method``; md returns a PosteriorSummary, the others a CellProbabilityMatrix."""
    check_method(method)
    if method == "weighted_average":
        return weighted_average_fit(records, partition, options)
    if method == "goodman":
        return goodman_fit(records, partition, options)
    return md_fit(records, partition, options, config)


def fit_point(records, partition, options, method="md", config=None):
    """Like ``fit`` but always returns the point estimate matrix."""
    out = fit(records, partition, options, method, config)
    return out.mean if isinstance(out, PosteriorSummary) else out


from .holdout import HoldoutReport, holdout_validate, predict_shares  # noqa: E402

__all__ = [
    "METHODS", "GoodmanResult", "HoldoutReport", "McmcConfig", "PosteriorSummary", "check_method",
    "fit", "fit_point", "goodman_fit", "goodman_regression", "holdout_validate", "md_fit",
    "md_fit_arrays", "predict_shares", "weighted_average_arrays", "weighted_average_fit",
]
