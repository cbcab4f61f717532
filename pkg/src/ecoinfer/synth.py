"""Synthetic elections with known cell tables, and an exact enumeration oracle."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np
from scipy.special import gammaln

from .errors import DimensionMismatch, TooLargeToEnumerate, ValidationError
from .model import (
    MIN_AGE,
    BracketPartition,
    CellProbabilityMatrix,
    OptionSet,
    PrecinctRecord,
    marginals,
)

MAX_AGE = 90
MAX_ENUMERATION_N = 14


@dataclass(frozen=True)
class SimConfig:
    n_precincts: int
    beta_true: CellProbabilityMatrix
    partition: BracketPartition
    options: OptionSet
    electors_per_precinct: int = 400
    age_clustering: float = 0.5
    seed: int = 0
    # relative weight per age; defaults to uniform over 18..90
    age_pyramid: Mapping[int, float] | None = None
    id_prefix: str = "m"

    def __post_init__(self):
        R, C = np.shape(self.beta_true.beta)
        if R != len(self.partition) or C != len(self.options):
            raise DimensionMismatch(
                f"beta_true is {R}x{C} but partition x options is "
                f"{len(self.partition)}x{len(self.options)}")
        if not 0.0 <= self.age_clustering <= 1.0:
            raise ValidationError("age_clustering must lie in [0, 1]")
        if self.n_precincts < 1 or self.electors_per_precinct < 0:
            raise ValidationError("need at least one precinct and a non-negative roll")

    def pyramid(self) -> tuple[np.ndarray, np.ndarray]:
        if self.age_pyramid is None:
            ages = np.arange(MIN_AGE, MAX_AGE + 1)
            weights = np.ones(len(ages))
        else:
            ages = np.array(sorted(self.age_pyramid), dtype=int)
            weights = np.array([self.age_pyramid[a] for a in ages], dtype=float)
        if np.any(weights < 0) or weights.sum() <= 0:
            raise ValidationError("age pyramid weights must be non-negative with positive total")
        return ages, weights / weights.sum()


@dataclass(frozen=True)
class SyntheticTruth:
    records: list[PrecinctRecord]
    true_tables: np.ndarray      # I x R x C
    beta_true: CellProbabilityMatrix
    ages: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    age_counts: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=int))
    options: OptionSet | None = None
    partition: BracketPartition | None = None

    def true_fractions(self) -> np.ndarray:
        """Realized aggregate cell fractions ``sum_i N / sum_i X``."""
        tot = self.true_tables.sum(axis=0)
        return tot / tot.sum(axis=1, keepdims=True)


def precinct_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream per precinct so output does not depend on iteration order."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def simulate_election(config: SimConfig) -> SyntheticTruth:
    """Generate age-clustered mesas and vote them from ``beta_true``.

    Each mesa draws a center age from the pyramid; every elector sits at the
    center age with probability ``age_clustering`` and is otherwise drawn
    from the pyramid.  Electors then vote independently using the
    ``beta_true`` row of their bracket.
    """
    ages, pyramid = config.pyramid()
    bracket_of_age = np.array([config.partition.bracket_of(int(a)) for a in ages])
    beta = np.asarray(config.beta_true.beta)
    R, C = beta.shape
    I = config.n_precincts
    n = config.electors_per_precinct
    age_counts = np.zeros((I, len(ages)), dtype=np.int64)
    tables = np.zeros((I, R, C), dtype=np.int64)
    for i in range(I):
        rng = precinct_rng(config.seed, i)
        center = rng.choice(len(ages), p=pyramid)
        at_center = rng.binomial(n, config.age_clustering)
        counts = rng.multinomial(n - at_center, pyramid)
        counts[center] += at_center
        age_counts[i] = counts
        x = np.bincount(bracket_of_age, weights=counts, minlength=R).astype(np.int64)
        for g in range(R):
            tables[i, g] = rng.multinomial(x[g], beta[g])
    width = len(str(I - 1))
    records = [
        PrecinctRecord(
            precinct_id=f"{config.id_prefix}{i:0{width}d}",
            electors=tuple(tables[i].sum(axis=1)),
            votes=tuple(tables[i].sum(axis=0)),
            series=f"S{i // 25:03d}",
            department=f"D{i // 100:02d}",
        )
        for i in range(I)
    ]
    return SyntheticTruth(records=records, true_tables=tables, beta_true=config.beta_true,
                          ages=ages, age_counts=age_counts, options=config.options,
                          partition=config.partition)


@dataclass(frozen=True)
class TwoRoundTruth:
    """A first round, a second round on the same rolls, and the true transition tables."""

    round1: SyntheticTruth
    round2: list[PrecinctRecord]
    transition_tables: np.ndarray   # I x C1 x C2
    transition_true: CellProbabilityMatrix


def simulate_second_round(first: SyntheticTruth, transition: CellProbabilityMatrix,
                          seed: int = 0) -> TwoRoundTruth:
    """Move each first-round voter to a second-round option using ``transition`` rows."""
    P = np.asarray(transition.beta)
    T1 = np.array([r.votes for r in first.records], dtype=np.int64)
    if P.shape[0] != T1.shape[1]:
        raise DimensionMismatch(
            f"transition has {P.shape[0]} rows for {T1.shape[1]} first-round options")
    tables = np.zeros((len(T1), P.shape[0], P.shape[1]), dtype=np.int64)
    for i in range(len(T1)):
        rng = precinct_rng(seed, i)
        for r in range(P.shape[0]):
            tables[i, r] = rng.multinomial(T1[i, r], P[r])
    round2 = [PrecinctRecord(precinct_id=rec.precinct_id, electors=rec.electors,
                             votes=tuple(tables[i].sum(axis=0)), series=rec.series,
                             department=rec.department)
              for i, rec in enumerate(first.records)]
    return TwoRoundTruth(round1=first, round2=round2, transition_tables=tables,
                         transition_true=transition)


def simulate_plebiscite(first: SyntheticTruth, p_si: Sequence[float],
                        seed: int = 0) -> tuple[dict[str, int], np.ndarray]:
    """Draw "si" ballots per first-round option; returns (si votes per precinct, true si counts)."""
    p_si = np.asarray(p_si, dtype=float)
    T1 = np.array([r.votes for r in first.records], dtype=np.int64)
    if p_si.shape != (T1.shape[1],):
        raise DimensionMismatch(f"need one si-probability per option, got {p_si.shape}")
    si = np.zeros_like(T1)
    for i in range(len(T1)):
        si[i] = precinct_rng(seed, i).binomial(T1[i], p_si)
    return ({r.precinct_id: int(si[i].sum()) for i, r in enumerate(first.records)}, si)


def enumerate_tables(x: Sequence[int], t: Sequence[int]) -> Iterator[np.ndarray]:
    """All non-negative integer tables with row sums ``x`` and column sums ``t``.

    Lexicographic over cells in row-major order; a cell's range is pruned by
    what the remaining rows can still absorb, so every partial table extends
    to at least one complete one.
    """
    x = [int(v) for v in x]
    t = [int(v) for v in t]
    R, C = len(x), len(t)
    if sum(x) != sum(t) or min(x + t, default=0) < 0:
        return
    table = np.zeros((R, C), dtype=np.int64)
    col_left = list(t)

    def fill(g: int, p: int, row_left: int, rows_below: int):
        if g == R - 1:
            table[g] = col_left
            yield table.copy()
            return
        if p == C - 1:
            v = row_left
            # remaining rows must absorb what this column still needs
            if v <= col_left[p] and col_left[p] - v <= rows_below:
                table[g, p] = v
                col_left[p] -= v
                yield from fill(g + 1, 0, x[g + 1], rows_below - x[g + 1])
                col_left[p] += v
            return
        rest_cols = sum(col_left[p + 1:])
        lo = max(0, row_left - rest_cols, col_left[p] - rows_below)
        hi = min(row_left, col_left[p])
        for v in range(lo, hi + 1):
            table[g, p] = v
            col_left[p] -= v
            yield from fill(g, p + 1, row_left - v, rows_below)
            col_left[p] += v
        table[g, p] = 0

    yield from fill(0, 0, x[0], sum(x[1:]))


def dirichlet_multinomial_logpmf(counts: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Log pmf of each row of ``counts`` under Dirichlet-multinomial(row total, alpha row)."""
    counts = np.asarray(counts, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    n = counts.sum(axis=-1)
    a = alpha.sum(axis=-1)
    return (gammaln(n + 1) - gammaln(counts + 1).sum(axis=-1) + gammaln(a) - gammaln(a + n)
            + (gammaln(alpha + counts) - gammaln(alpha)).sum(axis=-1))


def _alpha_grid(alpha_fixed, R: int, C: int) -> np.ndarray:
    alpha = np.broadcast_to(np.asarray(alpha_fixed, dtype=float), (R, C))
    if np.any(alpha <= 0):
        raise ValidationError("Dirichlet parameters must be positive")
    return alpha


def brute_force_table_posterior(record: PrecinctRecord, alpha_fixed=1.0) -> tuple[np.ndarray, int]:
    """Exact posterior mean of the cell counts and the number of feasible tables."""
    x, t = np.array(record.electors), np.array(record.votes)
    if x.sum() > MAX_ENUMERATION_N:
        raise TooLargeToEnumerate(
            f"precinct {record.precinct_id!r} has {x.sum()} electors; "
            f"enumeration is limited to {MAX_ENUMERATION_N}")
    alpha = _alpha_grid(alpha_fixed, len(x), len(t))
    tables = list(enumerate_tables(x, t))
    if not tables:
        raise ValidationError(f"precinct {record.precinct_id!r} admits no table")
    stack = np.stack(tables).astype(float)
    logw = dirichlet_multinomial_logpmf(stack, alpha[None]).sum(axis=1)
    w = np.exp(logw - logw.max())
    w /= w.sum()
    return np.tensordot(w, stack, axes=1), len(tables)


def brute_force_posterior(record: PrecinctRecord, alpha_fixed=1.0) -> np.ndarray:
    """Exact posterior mean of each cell fraction ``N[g, p] / X[g]`` for one precinct.

    Every feasible table is weighted by its Dirichlet-multinomial likelihood
    under ``alpha_fixed`` (a scalar or an R x C array); rows with no electors
    report 0.
    """
    mean_counts, _ = brute_force_table_posterior(record, alpha_fixed)
    x = np.array(record.electors, dtype=float)[:, None]
    return np.divide(mean_counts, x, out=np.zeros_like(mean_counts), where=x > 0)


def brute_force_aggregate(records: Sequence[PrecinctRecord], alpha_fixed=1.0) -> np.ndarray:
    """Exact posterior mean of the aggregate fractions; precincts are independent given alpha."""
    X, _ = marginals(records)
    total = sum(brute_force_table_posterior(r, alpha_fixed)[0] for r in records)
    xs = X.sum(axis=0).astype(float)[:, None]
    return np.divide(total, xs, out=np.zeros_like(total), where=xs > 0)
