"""Age curves, round-to-round transitions and party x plebiscite cross-tabs."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import MarginalMismatch, NoPairedPrecincts, RollDriftExceeded, ValidationError
from .estimators import (
    McmcConfig,
    PosteriorSummary,
    check_method,
    fit,
    goodman_regression,
    md_fit_arrays,
    weighted_average_arrays,
)
from .model import (
    BracketPartition,
    CellProbabilityMatrix,
    OptionSet,
    PrecinctRecord,
    cell_matrix,
    check_nonempty_brackets,
    labels_or_default,
    marginals,
)

DEFAULT_MAX_DRIFT = 0.01
PLEBISCITE_COLUMNS = ("si", "no/blank")


@dataclass(frozen=True)
class AgeCurves:
    """Per-option probability curves over bracket midpoints."""

    method: str
    brackets: tuple[str, ...]
    midpoints: np.ndarray
    curves: dict[str, np.ndarray]
    sd: dict[str, np.ndarray] | None
    result: CellProbabilityMatrix | PosteriorSummary


def fit_arrays(X, T, rows, cols, method: str = "md", config: McmcConfig | None = None):
    """Dispatch an estimator on raw margin arrays (rows need not be age brackets)."""
    check_method(method)
    rows = labels_or_default(rows, "r", np.shape(X)[1])
    cols = labels_or_default(cols, "c", np.shape(T)[1])
    if method == "md":
        return md_fit_arrays(X, T, config, rows=rows, cols=cols)
    X = np.asarray(X)
    check_nonempty_brackets(X[np.asarray(T).sum(axis=1) > 0], rows)
    if method == "goodman":
        return goodman_regression(X, T, rows, cols).matrix
    return cell_matrix(weighted_average_arrays(X, T), rows, cols)


def point_matrix(result) -> CellProbabilityMatrix:
    return result.mean if isinstance(result, PosteriorSummary) else result


def age_party_curve(records: Sequence[PrecinctRecord], partition: BracketPartition,
                    options: OptionSet, method: str = "md",
                    config: McmcConfig | None = None) -> AgeCurves:
    """Probability of each option (abstention included) as a function of age bracket."""
    result = fit(records, partition, options, method, config)
    beta = point_matrix(result).beta
    cols = labels_or_default(options, "opt", beta.shape[1])
    sd = None
    if isinstance(result, PosteriorSummary):
        sd = {c: result.sd[:, p].copy() for p, c in enumerate(cols)}
    return AgeCurves(method=method, brackets=partition.labels, midpoints=partition.midpoints(),
                     curves={c: beta[:, p].copy() for p, c in enumerate(cols)}, sd=sd,
                     result=result)


@dataclass(frozen=True)
class TransitionInput:
    """First-round counts (rows) paired by precinct with reconciled second-round counts."""

    precinct_ids: tuple[str, ...]
    first: np.ndarray        # I x C1
    second: np.ndarray       # I x C2, abstention adjusted so totals match the first round
    first_labels: tuple[str, ...]
    second_labels: tuple[str, ...]
    drift: np.ndarray        # |first total - second total| / first total, before reconciliation
    unpaired: tuple[str, ...] = ()


def pair_rounds(round1: Sequence[PrecinctRecord], round2: Sequence[PrecinctRecord],
                options1: OptionSet | Sequence[str], options2: OptionSet | Sequence[str],
                max_drift: float = DEFAULT_MAX_DRIFT) -> TransitionInput:
    """Pair precincts by exact id and fold roll drift into the second-round abstention column.

    Raises ``RollDriftExceeded`` if any paired precinct's totals differ by
    more than ``max_drift`` (relative) or the drift cannot be absorbed.
    """
    by_id2 = {r.precinct_id: r for r in round2}
    ids1 = [r.precinct_id for r in round1]
    paired = [r for r in round1 if r.precinct_id in by_id2]
    unpaired = tuple(sorted(set(ids1) ^ set(by_id2)))
    if not paired:
        raise NoPairedPrecincts("no precinct id appears in both rounds")
    first = np.array([r.votes for r in paired], dtype=np.int64)
    second = np.array([by_id2[r.precinct_id].votes for r in paired], dtype=np.int64)
    labels1 = labels_or_default(options1, "a", first.shape[1])
    labels2 = labels_or_default(options2, "b", second.shape[1])
    absorb = options2.abstain if isinstance(options2, OptionSet) else None
    n1 = first.sum(axis=1)
    n2 = second.sum(axis=1)
    diff = n1 - n2
    with np.errstate(invalid="ignore", divide="ignore"):
        drift = np.where(n1 > 0, np.abs(diff) / np.maximum(n1, 1), (n2 > 0).astype(float))
    ids = tuple(r.precinct_id for r in paired)
    bad = np.flatnonzero(drift > max_drift)
    if bad.size:
        raise RollDriftExceeded(
            f"{bad.size} precinct(s) exceed roll drift {max_drift:.2%}, e.g. "
            f"{ids[bad[0]]!r} with {drift[bad[0]]:.2%}")
    if np.any(diff != 0):
        if absorb is None:
            raise RollDriftExceeded("round totals differ but the second round has no "
                                    "abstention column to absorb the drift")
        col = labels2.index(absorb)
        second = second.copy()
        second[:, col] += diff
        if np.any(second[:, col] < 0):
            k = int(np.flatnonzero(second[:, col] < 0)[0])
            raise RollDriftExceeded(f"precinct {ids[k]!r}: drift exceeds its abstention count")
    return TransitionInput(precinct_ids=ids, first=first, second=second, first_labels=labels1,
                           second_labels=labels2, drift=drift, unpaired=unpaired)


def transition_matrix(data: TransitionInput, method: str = "md",
                      config: McmcConfig | None = None):
    """``P(second-round choice | first-round choice)`` from paired precinct counts."""
    return fit_arrays(data.first, data.second, data.first_labels, data.second_labels,
                      method, config)


def plebiscite_cross(first_round: Sequence[PrecinctRecord], si_votes: Mapping[str, int],
                     options: OptionSet | Sequence[str] | None = None, method: str = "md",
                     config: McmcConfig | None = None):
    """``P(si | first-round option)`` with "no" and blank merged into one column.

    Every first-round participant counted in ``first_round`` is a row unit;
    the plebiscite columns are the "si" ballots and everyone else.
    """
    paired = [r for r in first_round if r.precinct_id in si_votes]
    if not paired:
        raise NoPairedPrecincts("no first-round precinct has plebiscite results")
    first = np.array([r.votes for r in paired], dtype=np.int64)
    total = first.sum(axis=1)
    si = np.array([int(si_votes[r.precinct_id]) for r in paired], dtype=np.int64)
    for r, s, n in zip(paired, si, total):
        if s < 0:
            raise ValidationError(f"precinct {r.precinct_id!r}: negative si votes")
        if s > n:
            raise MarginalMismatch(r.precinct_id, int(n), int(s),
                                   "plebiscite si votes exceed the first-round total")
    second = np.stack([si, total - si], axis=1)
    rows = labels_or_default(options, "a", first.shape[1])
    return fit_arrays(first, second, rows, PLEBISCITE_COLUMNS, method, config)
