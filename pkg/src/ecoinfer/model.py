"""Domain types, validation, padron aggregation and the method of bounds.

Every estimator consumes precinct marginals in the same shape: ``X[i, g]`` is
the number of electors of precinct ``i`` in age bracket ``g`` and ``T[i, p]``
is the number of votes cast for option ``p``.  When the option set carries an
abstention column the two margins describe the same electors and sum to the
same total.
"""
from __future__ import annotations

import re
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    AgeBelowMinimum,
    AgeNotCovered,
    DimensionMismatch,
    EmptyBracket,
    MarginalMismatch,
    NegativeCount,
    UnknownOption,
    ValidationError,
)

MIN_AGE = 18
ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class OptionSet:
    """Ordered option labels; ``abstain`` names the abstention column, if any."""

    options: tuple[str, ...]
    abstain: str | None = None

    def __post_init__(self):
        opts = tuple(str(o) for o in self.options)
        object.__setattr__(self, "options", opts)
        if len(opts) < 2:
            raise ValidationError("an option set needs at least 2 options")
        if any(not o.strip() for o in opts):
            raise ValidationError("option labels must be non-empty")
        if len(set(opts)) != len(opts):
            raise ValidationError(f"duplicate option labels in {opts}")
        if self.abstain is not None and self.abstain not in opts:
            raise UnknownOption(f"abstention column {self.abstain!r} is not one of {opts}")

    def __len__(self):
        return len(self.options)

    def __iter__(self):
        return iter(self.options)

    def index(self, label: str) -> int:
        try:
            return self.options.index(label)
        except ValueError:
            raise UnknownOption(f"unknown option {label!r}") from None

    @property
    def has_abstain(self) -> bool:
        return self.abstain is not None


@dataclass(frozen=True)
class BracketPartition:
    """Contiguous age brackets; ``hi=None`` on the last bracket means open-ended."""

    brackets: tuple[tuple[int, int | None], ...]

    def __post_init__(self):
        brackets = tuple((int(lo), None if hi is None else int(hi)) for lo, hi in self.brackets)
        object.__setattr__(self, "brackets", brackets)
        if not brackets:
            raise ValidationError("a partition needs at least one bracket")
        if brackets[0][0] != MIN_AGE:
            raise ValidationError(f"first bracket must start at {MIN_AGE}, got {brackets[0][0]}")
        for k, (lo, hi) in enumerate(brackets):
            if hi is None:
                if k != len(brackets) - 1:
                    raise ValidationError("only the last bracket may be open-ended")
                continue
            if lo > hi:
                raise ValidationError(f"bracket {lo}-{hi} has lo > hi")
            if k + 1 < len(brackets) and brackets[k + 1][0] != hi + 1:
                raise ValidationError(
                    f"brackets {lo}-{hi} and {brackets[k + 1][0]}-... leave a gap or overlap")

    @classmethod
    def parse(cls, text: str) -> "BracketPartition":
        """Parse ``"18-24,25-29,30+"``."""
        out = []
        for raw in text.split(","):
            tok = raw.strip()
            m = re.fullmatch(r"(\d+)\s*-\s*(\d+)", tok)
            if m:
                out.append((int(m.group(1)), int(m.group(2))))
                continue
            m = re.fullmatch(r"(\d+)", tok)
            if m:
                out.append((int(m.group(1)), int(m.group(1))))
                continue
            m = re.fullmatch(r"(\d+)\s*\+", tok)
            if m:
                out.append((int(m.group(1)), None))
                continue
            raise ValidationError(f"cannot parse bracket {tok!r}")
        return cls(tuple(out))

    @classmethod
    def uniform(cls, width: int, max_age: int = 90, open_ended: bool = True) -> "BracketPartition":
        """Brackets of ``width`` years from 18; the last one absorbs ``max_age`` (open if requested)."""
        if width < 1:
            raise ValidationError("bracket width must be >= 1")
        out = []
        lo = MIN_AGE
        while lo + width - 1 < max_age:
            out.append((lo, lo + width - 1))
            lo += width
        out.append((lo, None if open_ended else max_age))
        return cls(tuple(out))

    def __len__(self):
        return len(self.brackets)

    @property
    def open_ended(self) -> bool:
        return self.brackets[-1][1] is None

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(f"{lo}+" if hi is None else (f"{lo}" if lo == hi else f"{lo}-{hi}")
                     for lo, hi in self.brackets)

    def labels_spec(self) -> tuple[str, ...]:
        return tuple(f"{lo}+" if hi is None else f"{lo}-{hi}" for lo, hi in self.brackets)

    def midpoints(self, open_width: int = 5) -> np.ndarray:
        return np.array([(lo + (lo + open_width - 1 if hi is None else hi)) / 2
                         for lo, hi in self.brackets])

    def bracket_of(self, age: int) -> int:
        if age < MIN_AGE:
            raise AgeBelowMinimum(f"age {age} is below the voting age {MIN_AGE}")
        for g, (lo, hi) in enumerate(self.brackets):
            if lo <= age and (hi is None or age <= hi):
                return g
        raise AgeNotCovered(f"age {age} falls outside partition {','.join(self.labels)}")


@dataclass(frozen=True)
class PrecinctRecord:
    """One mesa: electors per bracket (``electors``) and votes per option (``votes``)."""

    precinct_id: str
    electors: tuple[int, ...]
    votes: tuple[int, ...]
    series: str = ""
    department: str = ""

    def __post_init__(self):
        object.__setattr__(self, "electors", tuple(int(x) for x in self.electors))
        object.__setattr__(self, "votes", tuple(int(x) for x in self.votes))

    @property
    def roll(self) -> int:
        return sum(self.electors)

    @property
    def total_votes(self) -> int:
        return sum(self.votes)


@dataclass(frozen=True)
class CellProbabilityMatrix:
    """Row-stochastic ``beta[g, p] = P(option p | row g)``."""

    beta: np.ndarray
    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float)
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "row_labels", tuple(self.row_labels))
        object.__setattr__(self, "col_labels", tuple(self.col_labels))
        if beta.shape != (len(self.row_labels), len(self.col_labels)):
            raise DimensionMismatch(
                f"beta shape {beta.shape} vs labels {len(self.row_labels)}x{len(self.col_labels)}")
        if np.any(beta < 0) or np.any(beta > 1):
            raise ValidationError("cell probabilities must lie in [0, 1]")
        if not np.allclose(beta.sum(axis=1), 1.0, rtol=0, atol=ROW_SUM_TOL):
            raise ValidationError(f"rows do not sum to 1: {beta.sum(axis=1)}")

    @property
    def shape(self):
        return self.beta.shape


@dataclass(frozen=True)
class CellBounds:
    """Per-precinct (``lo``, ``hi``: I x R x C) and aggregate (R x C) bounds on cell fractions."""

    lo: np.ndarray
    hi: np.ndarray
    agg_lo: np.ndarray
    agg_hi: np.ndarray
    precinct_ids: tuple[str, ...] = field(default=())

    def contains(self, fractions: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        """Boolean mask of per-precinct fractions that lie inside the bounds."""
        return (fractions >= self.lo - tol) & (fractions <= self.hi + tol)

    def contains_aggregate(self, fractions: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        return (fractions >= self.agg_lo - tol) & (fractions <= self.agg_hi + tol)


def validate_precinct(record: PrecinctRecord, options: OptionSet,
                      partition: BracketPartition | None = None) -> PrecinctRecord:
    """Return ``record`` unchanged if its marginals are consistent, else raise."""
    if len(record.votes) != len(options):
        raise UnknownOption(
            f"precinct {record.precinct_id!r} reports {len(record.votes)} vote columns "
            f"for {len(options)} options {options.options}")
    if partition is not None and len(record.electors) != len(partition):
        raise DimensionMismatch(
            f"precinct {record.precinct_id!r} has {len(record.electors)} brackets, "
            f"partition has {len(partition)}")
    if any(x < 0 for x in record.electors) or any(t < 0 for t in record.votes):
        raise NegativeCount(f"precinct {record.precinct_id!r} has a negative count")
    roll, votes = record.roll, record.total_votes
    if options.has_abstain:
        if roll != votes:
            raise MarginalMismatch(record.precinct_id, roll, votes,
                                   "abstention column present, totals must match")
    elif votes > roll:
        raise MarginalMismatch(record.precinct_id, roll, votes, "turnout exceeds the roll")
    return record


def validate_records(records: Sequence[PrecinctRecord], options: OptionSet,
                     partition: BracketPartition | None = None) -> list[PrecinctRecord]:
    return [validate_precinct(r, options, partition) for r in records]


def marginals(records: Sequence[PrecinctRecord]) -> tuple[np.ndarray, np.ndarray]:
    """Stack records into ``(X, T)`` integer arrays of shape (I, R) and (I, C)."""
    if not records:
        raise ValidationError("no precinct records")
    R = {len(r.electors) for r in records}
    C = {len(r.votes) for r in records}
    if len(R) != 1 or len(C) != 1:
        raise DimensionMismatch("records disagree on the number of brackets or options")
    X = np.array([r.electors for r in records], dtype=np.int64)
    T = np.array([r.votes for r in records], dtype=np.int64)
    return X, T


def check_partition(X: np.ndarray, partition: BracketPartition | None):
    if partition is not None and X.shape[1] != len(partition):
        raise DimensionMismatch(f"records have {X.shape[1]} brackets, partition has {len(partition)}")


def check_nonempty_brackets(X: np.ndarray, labels: Sequence[str]):
    empty = np.flatnonzero(X.sum(axis=0) == 0)
    if empty.size:
        raise EmptyBracket("no precinct has electors in bracket(s) "
                           + ", ".join(str(labels[g]) for g in empty))


def aggregate_padron(padron_rows: Iterable[tuple[str, int, int]],
                     partition: BracketPartition) -> dict[str, tuple[int, ...]]:
    """Bin per-age elector counts into bracket counts for each precinct.

    Parameters
    ----------
    padron_rows : iterable of (precinct_id, age, elector_count)
    partition : BracketPartition

    Returns
    -------
    dict mapping precinct_id to a tuple of elector counts, one per bracket,
    in sorted precinct order.
    """
    acc: dict[str, list[int]] = defaultdict(lambda: [0] * len(partition))
    for pid, age, count in padron_rows:
        age, count = int(age), int(count)
        if count < 0:
            raise NegativeCount(f"precinct {pid!r}, age {age}: negative elector count {count}")
        acc[str(pid)][partition.bracket_of(age)] += count
    return {pid: tuple(acc[pid]) for pid in sorted(acc)}


def table_bounds(X: np.ndarray, T: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Bounds on cell counts ``N[i, g, p]`` implied by the margins alone."""
    X = np.asarray(X, dtype=np.int64)
    T = np.asarray(T, dtype=np.int64)
    N = X.sum(axis=1)
    Xg = X[:, :, None]
    Tp = T[:, None, :]
    lo = np.maximum(0, Tp - (N[:, None, None] - Xg))
    hi = np.minimum(Xg, Tp)
    return lo, hi


def duncan_davis_bounds(records: Sequence[PrecinctRecord]) -> CellBounds:
    """Deterministic bounds on the fraction of bracket ``g`` choosing option ``p``.

    Per precinct, ``lo = max(0, T[p] - (N - X[g])) / X[g]`` and
    ``hi = min(X[g], T[p]) / X[g]``; empty cells get ``[0, 0]``.  Aggregate
    bounds weight each precinct by its electors in the bracket, which is
    exactly how the aggregate fraction combines precinct fractions.
    """
    X, T = marginals(records)
    lo_n, hi_n = table_bounds(X, T)
    Xg = X[:, :, None].astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        lo = np.where(Xg > 0, lo_n / Xg, 0.0)
        hi = np.where(Xg > 0, hi_n / Xg, 0.0)
    tot = X.sum(axis=0)[:, None].astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        agg_lo = np.where(tot > 0, lo_n.sum(axis=0) / tot, 0.0)
        agg_hi = np.where(tot > 0, hi_n.sum(axis=0) / tot, 0.0)
    return CellBounds(lo=lo, hi=hi, agg_lo=agg_lo, agg_hi=agg_hi,
                      precinct_ids=tuple(r.precinct_id for r in records))


def records_from_arrays(X, T, ids: Sequence[str] | None = None,
                        series: Sequence[str] | None = None,
                        departments: Sequence[str] | None = None) -> list[PrecinctRecord]:
    X = np.asarray(X)
    T = np.asarray(T)
    ids = ids if ids is not None else [f"p{i:04d}" for i in range(len(X))]
    return [PrecinctRecord(precinct_id=str(ids[i]), electors=tuple(X[i]), votes=tuple(T[i]),
                           series="" if series is None else str(series[i]),
                           department="" if departments is None else str(departments[i]))
            for i in range(len(X))]


def cell_matrix(beta, row_labels: Sequence[str], col_labels: Sequence[str]) -> CellProbabilityMatrix:
    """Build a matrix after clipping float dust outside [0, 1] and renormalizing rows."""
    beta = np.clip(np.asarray(beta, dtype=float), 0.0, 1.0)
    beta = beta / beta.sum(axis=1, keepdims=True)
    return CellProbabilityMatrix(beta=beta, row_labels=row_labels, col_labels=col_labels)


def default_labels(prefix: str, n: int) -> tuple[str, ...]:
    return tuple(f"{prefix}{k}" for k in range(n))


def labels_or_default(labels, prefix: str, n: int) -> tuple[str, ...]:
    if labels is None:
        return default_labels(prefix, n)
    if isinstance(labels, OptionSet):
        labels = labels.options
    elif isinstance(labels, BracketPartition):
        labels = labels.labels
    labels = tuple(labels)
    if len(labels) != n:
        raise DimensionMismatch(f"{len(labels)} labels for {n} entries")
    return labels


def as_mapping(records: Sequence[PrecinctRecord]) -> Mapping[str, PrecinctRecord]:
    return {r.precinct_id: r for r in records}
