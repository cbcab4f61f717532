"""Goodman ecological regression with box constraints."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import lsq_linear

from ..errors import RankDeficient
from ..model import (
    BracketPartition,
    CellProbabilityMatrix,
    PrecinctRecord,
    cell_matrix,
    check_partition,
    labels_or_default,
    marginals,
)


@dataclass(frozen=True)
class GoodmanResult:
    matrix: CellProbabilityMatrix
    raw: np.ndarray            # unconstrained weighted least squares, may leave [0, 1]
    clamped: np.ndarray        # box-constrained solution before row renormalization
    renormalization_delta: np.ndarray  # per-row |1 - sum| of the clamped solution
    rank: int


def goodman_regression(X: np.ndarray, T: np.ndarray, rows=None, cols=None) -> GoodmanResult:
    X = np.asarray(X, dtype=float)
    T = np.asarray(T, dtype=float)
    roll = X.sum(axis=1)
    votes = T.sum(axis=1)
    keep = (roll > 0) & (votes > 0)
    X, T, roll, votes = X[keep], T[keep], roll[keep], votes[keep]
    R, C = X.shape[1], T.shape[1]
    w = X / roll[:, None]
    v = T / votes[:, None]
    rank = int(np.linalg.matrix_rank(w)) if len(w) else 0
    if rank < R:
        raise RankDeficient(rank, R)
    sw = np.sqrt(roll)
    A = w * sw[:, None]
    raw = np.linalg.lstsq(A, v * sw[:, None], rcond=None)[0]
    clamped = np.empty((R, C))
    for p in range(C):
        b = v[:, p] * sw
        clamped[:, p] = lsq_linear(A, b, bounds=(0.0, 1.0), method="bvls", tol=1e-12).x
    clamped = np.clip(clamped, 0.0, 1.0)
    sums = clamped.sum(axis=1)
    # a row clamped to all zeros carries no information; fall back to uniform
    beta = np.where(sums[:, None] > 0, clamped / np.where(sums > 0, sums, 1.0)[:, None], 1.0 / C)
    matrix = cell_matrix(beta, labels_or_default(rows, "g", R), labels_or_default(cols, "opt", C))
    return GoodmanResult(matrix=matrix, raw=raw, clamped=clamped,
                         renormalization_delta=np.abs(1.0 - sums), rank=rank)


def goodman_fit(records: Sequence[PrecinctRecord], partition: BracketPartition | None = None,
                options=None) -> CellProbabilityMatrix:
    """Per-option weighted least squares of option shares on bracket shares.

    Each column minimizes ``sum_i N_i (v[i, p] - w[i] . beta[:, p])**2`` with
    ``0 <= beta <= 1``; rows are then renormalized.  Use ``goodman_regression``
    for the raw and pre-normalization solutions.
    """
    X, T = marginals(records)
    check_partition(X, partition)
    return goodman_regression(X, T, partition, options).matrix
