"""Train/test verification of an estimator on held-out precincts."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import SplitTooSmall, ValidationError
from ..model import BracketPartition, CellProbabilityMatrix, OptionSet, PrecinctRecord, marginals
from .mcmc import McmcConfig
from . import fit_point


@dataclass(frozen=True)
class HoldoutReport:
    method: str
    split_fraction: float
    seed: int
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    beta: CellProbabilityMatrix
    mae: float
    per_option_mae: dict[str, float]
    predicted_shares: np.ndarray   # n_test x C
    observed_shares: np.ndarray    # n_test x C


def predict_shares(X: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Predicted option shares ``sum_g w[i, g] beta[g, p]`` for each precinct."""
    X = np.asarray(X, dtype=float)
    w = X / X.sum(axis=1, keepdims=True)
    return w @ beta


def holdout_validate(records: Sequence[PrecinctRecord], partition: BracketPartition | None,
                     options: OptionSet | Sequence[str] | None, method: str = "md",
                     split_fraction: float = 0.7, seed: int = 0,
                     config: McmcConfig | None = None) -> HoldoutReport:
    """Fit on a seeded random share of precincts and score vote-share predictions on the rest."""
    if not 0.0 < split_fraction < 1.0:
        raise ValidationError(f"split_fraction must lie in (0, 1), got {split_fraction}")
    if len(records) < 2:
        raise SplitTooSmall("holdout validation needs at least 2 precincts")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(records))
    n_train = int(round(split_fraction * len(records)))
    if n_train == 0 or n_train == len(records):
        raise SplitTooSmall(
            f"split {split_fraction} of {len(records)} precincts leaves an empty side")
    train = [records[k] for k in sorted(order[:n_train])]
    test = [records[k] for k in sorted(order[n_train:])]
    beta = fit_point(train, partition, options, method, config)
    X, T = marginals(test)
    keep = (X.sum(axis=1) > 0) & (T.sum(axis=1) > 0)
    pred = predict_shares(X[keep], beta.beta)
    obs = T[keep] / T[keep].sum(axis=1, keepdims=True)
    err = np.abs(pred - obs)
    return HoldoutReport(
        method=method, split_fraction=split_fraction, seed=seed,
        train_ids=tuple(r.precinct_id for r in train), test_ids=tuple(r.precinct_id for r in test),
        beta=beta, mae=float(err.mean()),
        per_option_mae={c: float(e) for c, e in zip(beta.col_labels, err.mean(axis=0))},
        predicted_shares=pred, observed_shares=obs)
