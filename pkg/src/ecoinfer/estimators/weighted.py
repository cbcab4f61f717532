"""Weighted average of per-precinct option shares, weighted by padron bracket shares."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ..model import (
    BracketPartition,
    CellProbabilityMatrix,
    PrecinctRecord,
    cell_matrix,
    check_nonempty_brackets,
    check_partition,
    labels_or_default,
    marginals,
)


def weighted_average_arrays(X: np.ndarray, T: np.ndarray) -> np.ndarray:
    """``beta[g, p] = sum_i w[i, g] v[i, p] / sum_i w[i, g]``.

    ``w[i, g] = X[i, g] / N_i`` and ``v[i, p] = T[i, p] / sum_p T[i, p]``; the
    latter equals ``T / N_i`` whenever abstention is a column.  Precincts with
    no electors or no votes carry no information and are dropped.
    """
    X = np.asarray(X, dtype=float)
    T = np.asarray(T, dtype=float)
    roll = X.sum(axis=1)
    votes = T.sum(axis=1)
    keep = (roll > 0) & (votes > 0)
    X, T, roll, votes = X[keep], T[keep], roll[keep], votes[keep]
    w = X / roll[:, None]
    v = T / votes[:, None]
    return (w.T @ v) / w.sum(axis=0)[:, None]


def weighted_average_fit(records: Sequence[PrecinctRecord], partition: BracketPartition | None = None,
                         options=None) -> CellProbabilityMatrix:
    """Estimate ``P(option | bracket)`` by the padron-weighted average of precinct results.

    Raises ``EmptyBracket`` when no precinct has electors in some bracket.
    """
    X, T = marginals(records)
    check_partition(X, partition)
    rows = labels_or_default(partition, "g", X.shape[1])
    cols = labels_or_default(options, "opt", T.shape[1])
    check_nonempty_brackets(X[T.sum(axis=1) > 0], rows)
    return cell_matrix(weighted_average_arrays(X, T), rows, cols)
