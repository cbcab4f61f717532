"""Hierarchical multinomial-Dirichlet R x C model fitted by MCMC.

Model, per precinct ``i`` and row ``g``::

    N[i, g, :] ~ Multinomial(X[i, g], theta[i, g, :])
    theta[i, g, :] ~ Dirichlet(alpha[g, :])
    alpha[g, p] ~ Gamma(shape, rate)

with the latent tables ``N[i]`` constrained to the observed margins.  One
sweep updates the tables by margin-preserving 2 x 2 swaps, then ``log alpha``
by random-walk Metropolis.  By default ``theta`` is integrated out, so both
steps target the Dirichlet-multinomial likelihood of the tables directly.
With ``collapsed=False`` the sweep draws ``theta`` explicitly and the swaps
use the plain multinomial likelihood; that variant targets the same posterior
but mixes far worse when brackets are weakly identified.  All precincts move
in lockstep so each step is a handful of array operations.
"""
from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from ..errors import NoFeasibleTable, NonConvergenceWarning, ValidationError
from ..model import (
    BracketPartition,
    CellProbabilityMatrix,
    OptionSet,
    PrecinctRecord,
    cell_matrix,
    check_nonempty_brackets,
    check_partition,
    labels_or_default,
    marginals,
)
from .diagnostics import effective_sample_size, split_rhat

RHAT_THRESHOLD = 1.1
_THETA_FLOOR = 1e-300
_TARGET_ACCEPT = 0.44


@dataclass(frozen=True)
class McmcConfig:
    chains: int = 4
    iterations: int = 5000
    burn_in: int = 1000
    thinning: int = 5
    seed: int = 0
    prior_shape: float = 4.0
    prior_rate: float = 2.0
    proposal_step: int = 3
    # swap proposals per precinct per sweep; None means R * C
    swaps_per_iteration: int | None = None
    # hold alpha at this value (scalar or R x C) instead of sampling it
    fixed_alpha: object = None
    alpha_step: float = 0.1
    # integrate theta out of the table and alpha updates; False runs the explicit
    # theta Gibbs step between them
    collapsed: bool = True
    # assert table margins after every sweep
    debug: bool = False

    def __post_init__(self):
        if self.chains < 1:
            raise ValidationError("chains must be >= 1")
        if self.thinning < 1:
            raise ValidationError("thinning must be >= 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ValidationError("need 0 <= burn_in < iterations")
        if self.prior_shape <= 0 or self.prior_rate <= 0:
            raise ValidationError("prior shape and rate must be positive")
        if self.proposal_step < 1:
            raise ValidationError("proposal_step must be a positive integer")
        if self.swaps_per_iteration is not None and self.swaps_per_iteration < 1:
            raise ValidationError("swaps_per_iteration must be >= 1")
        if self.alpha_step <= 0:
            raise ValidationError("alpha_step must be positive")

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        if d["fixed_alpha"] is not None:
            d["fixed_alpha"] = np.asarray(d["fixed_alpha"], dtype=float).tolist()
        return d


@dataclass(frozen=True)
class PosteriorSummary:
    """Posterior of the aggregate cell fractions ``F[g, p]``."""

    mean: CellProbabilityMatrix
    sd: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    rhat: np.ndarray | None
    effective_samples: int
    ess: np.ndarray
    precinct_means: np.ndarray          # I x R x C posterior mean of N / X (0 where X = 0)
    alpha_mean: np.ndarray
    swap_acceptance: float
    draws: np.ndarray = field(repr=False)  # chains x kept draws x R x C
    warnings: tuple[str, ...] = ()

    @property
    def converged(self) -> bool:
        return not self.warnings


def initial_table(x: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Integer table with row sums ``x`` and column sums ``t`` close to the independence fit.

    The real-valued independence table already matches both margins (one
    proportional-fitting pass suffices for two margins).  Its floor is topped
    up greedily by largest fractional part, one unit per cell, and any
    leftover residual is placed northwest-corner style, which always succeeds
    when the margins balance.
    """
    x = np.asarray(x, dtype=np.int64)
    t = np.asarray(t, dtype=np.int64)
    if np.any(x < 0) or np.any(t < 0) or x.sum() != t.sum():
        raise NoFeasibleTable(f"no table has row sums {x.tolist()} and column sums {t.tolist()}")
    n = x.sum()
    R, C = len(x), len(t)
    if n == 0:
        return np.zeros((R, C), dtype=np.int64)
    real = np.outer(x, t) / n
    table = np.floor(real).astype(np.int64)
    r = x - table.sum(axis=1)
    c = t - table.sum(axis=0)
    frac = (real - table).ravel()
    for k in np.argsort(-frac, kind="stable"):
        g, p = divmod(int(k), C)
        if r[g] > 0 and c[p] > 0:
            table[g, p] += 1
            r[g] -= 1
            c[p] -= 1
    g = p = 0
    while g < R and p < C:
        m = min(r[g], c[p])
        table[g, p] += m
        r[g] -= m
        c[p] -= m
        if r[g] == 0:
            g += 1
        if p < C and c[p] == 0:
            p += 1
    return table


def _alpha_logpost(alpha, n_obs, sum_log_theta, shape, rate):
    """Log posterior of log(alpha) per row, given theta through its sufficient statistics."""
    log_a = np.log(alpha)
    lik = n_obs * (gammaln(alpha.sum(axis=1)) - gammaln(alpha).sum(axis=1))
    lik += ((alpha - 1.0) * sum_log_theta).sum(axis=1)
    prior = (shape * log_a - rate * alpha).sum(axis=1)  # includes the log-scale Jacobian
    return lik + prior


class _CollapsedAlpha:
    """Dirichlet-multinomial log likelihood of alpha given the tables, cached by row and column.

    Row ``g`` contributes ``sum_i lgamma(A_g) - lgamma(A_g + X[i, g])`` plus, per
    column, ``sum_i lgamma(alpha_gp + N[i, g, p]) - lgamma(alpha_gp)``, with
    ``A_g = sum_p alpha_gp``.  Rows with no electors contribute zero.
    """

    def __init__(self, X):
        self.X = X.astype(float)

    def row_part(self, A):
        return (gammaln(A)[None, :] - gammaln(A[None, :] + self.X)).sum(axis=0)

    @staticmethod
    def col_part(a, n_col):
        return (gammaln(a[None, :] + n_col) - gammaln(a)[None, :]).sum(axis=0)


@dataclass
class _ChainResult:
    F: np.ndarray
    n_sum: np.ndarray
    alpha_sum: np.ndarray
    kept: int
    swap_accept: float


def _run_chain(X, T, cfg: McmcConfig, chain_index: int, fixed_alpha) -> _ChainResult:
    rng = np.random.default_rng(cfg.seed + chain_index)
    I, R = X.shape
    C = T.shape[1]
    N = np.stack([initial_table(X[i], T[i]) for i in range(I)])
    n_grid = np.arange(int(max(X.max(initial=0), T.max(initial=0))) + cfg.proposal_step + 2)
    lf = gammaln(n_grid + 1.0)
    idx = np.arange(I)
    Xtot = X.sum(axis=0).astype(float)
    occupied = X > 0  # rows whose theta is informed by data
    n_obs = occupied.sum(axis=0).astype(float)
    shape, rate = cfg.prior_shape, cfg.prior_rate

    if fixed_alpha is not None:
        alpha = np.broadcast_to(np.asarray(fixed_alpha, dtype=float), (R, C)).copy()
    else:
        alpha = rng.gamma(shape, 1.0 / rate, size=(R, C))
    step = np.full((R, C), cfg.alpha_step)
    acc_alpha = np.zeros((R, C))
    swaps = cfg.swaps_per_iteration or R * C
    can_swap = R >= 2 and C >= 2

    n_keep = len(range(cfg.burn_in, cfg.iterations, cfg.thinning))
    F = np.empty((n_keep, R, C))
    n_sum = np.zeros((I, R, C))
    alpha_sum = np.zeros((R, C))
    kept = 0
    swap_tries = swap_acc = 0

    def draw_theta():
        G = np.maximum(rng.standard_gamma(alpha[None, :, :] + N), _THETA_FLOOR)
        return np.log(G) - np.log(G.sum(axis=2, keepdims=True))

    def unit_weights():
        # log weight of n units in cell (g, p) once theta is integrated out
        return gammaln(alpha[:, :, None] + n_grid[None, None, :]) - lf[None, None, :]

    if cfg.collapsed:
        W = unit_weights()
        dm = _CollapsedAlpha(X)
    else:
        log_theta = draw_theta()

    for it in range(cfg.iterations):
        if can_swap:
            g1 = rng.integers(R, size=(swaps, I))
            g2 = (g1 + rng.integers(1, R, size=(swaps, I))) % R
            p1 = rng.integers(C, size=(swaps, I))
            p2 = (p1 + rng.integers(1, C, size=(swaps, I))) % C
            ks = rng.integers(1, cfg.proposal_step + 1, size=(swaps, I))
            log_u = np.log(rng.random(size=(swaps, I)))
            for s in range(swaps):
                a1, a2, b1, b2, k = g1[s], g2[s], p1[s], p2[s], ks[s]
                up1 = N[idx, a1, b1]
                up2 = N[idx, a2, b2]
                dn1 = N[idx, a1, b2]
                dn2 = N[idx, a2, b1]
                ok = (dn1 >= k) & (dn2 >= k)
                d1 = np.where(ok, dn1 - k, 0)
                d2 = np.where(ok, dn2 - k, 0)
                if cfg.collapsed:
                    log_r = (W[a1, b1, up1 + k] - W[a1, b1, up1] + W[a2, b2, up2 + k] - W[a2, b2, up2]
                             + W[a1, b2, d1] - W[a1, b2, dn1] + W[a2, b1, d2] - W[a2, b1, dn2])
                else:
                    log_r = k * (log_theta[idx, a1, b1] + log_theta[idx, a2, b2]
                                 - log_theta[idx, a1, b2] - log_theta[idx, a2, b1])
                    log_r -= lf[up1 + k] - lf[up1] + lf[up2 + k] - lf[up2]
                    log_r -= lf[d1] - lf[dn1] + lf[d2] - lf[dn2]
                acc = ok & (log_u[s] < log_r)
                if acc.any():
                    j = idx[acc]
                    kk = k[acc]
                    N[j, a1[acc], b1[acc]] += kk
                    N[j, a2[acc], b2[acc]] += kk
                    N[j, a1[acc], b2[acc]] -= kk
                    N[j, a2[acc], b1[acc]] -= kk
                swap_tries += I
                swap_acc += int(acc.sum())
            if cfg.debug:
                assert np.array_equal(N.sum(axis=2), X) and np.array_equal(N.sum(axis=1), T)

        if not cfg.collapsed:
            log_theta = draw_theta()

        if fixed_alpha is None:
            if cfg.collapsed:
                A = alpha.sum(axis=1)
                cur_row = dm.row_part(A)
                for p in range(C):
                    old = alpha[:, p]
                    prop = old * np.exp(step[:, p] * rng.standard_normal(R))
                    A_new = A - old + prop
                    new_row = dm.row_part(A_new)
                    delta = (new_row - cur_row
                             + dm.col_part(prop, N[:, :, p]) - dm.col_part(old, N[:, :, p])
                             + shape * (np.log(prop) - np.log(old)) - rate * (prop - old))
                    take = np.log(rng.random(R)) < delta
                    alpha[take, p] = prop[take]
                    A = np.where(take, A_new, A)
                    cur_row = np.where(take, new_row, cur_row)
                    acc_alpha[:, p] += take
                W = unit_weights()
            else:
                slt = np.where(occupied[:, :, None], log_theta, 0.0).sum(axis=0)
                cur = _alpha_logpost(alpha, n_obs, slt, shape, rate)
                for p in range(C):
                    prop = alpha.copy()
                    prop[:, p] = alpha[:, p] * np.exp(step[:, p] * rng.standard_normal(R))
                    new = _alpha_logpost(prop, n_obs, slt, shape, rate)
                    take = np.log(rng.random(R)) < new - cur
                    alpha[take, p] = prop[take, p]
                    cur = np.where(take, new, cur)
                    acc_alpha[:, p] += take
            if it < cfg.burn_in and (it + 1) % 50 == 0:
                step *= np.exp(acc_alpha / 50.0 - _TARGET_ACCEPT)
                acc_alpha[:] = 0.0

        if it >= cfg.burn_in and (it - cfg.burn_in) % cfg.thinning == 0:
            F[kept] = N.sum(axis=0) / Xtot[:, None]
            n_sum += N
            alpha_sum += alpha
            kept += 1

    return _ChainResult(F=F, n_sum=n_sum, alpha_sum=alpha_sum, kept=kept,
                        swap_accept=swap_acc / swap_tries if swap_tries else 0.0)


def _worker_count(chains: int) -> int:
    try:
        cap = int(os.environ.get("EI_THREADS", "1"))
    except ValueError:
        cap = 1
    return max(1, min(chains, cap))


def md_fit_arrays(X, T, config: McmcConfig | None = None, rows=None, cols=None) -> PosteriorSummary:
    cfg = config or McmcConfig()
    X = np.asarray(X, dtype=np.int64)
    T = np.asarray(T, dtype=np.int64)
    I, R = X.shape
    C = T.shape[1]
    rows = labels_or_default(rows, "g", R)
    cols = labels_or_default(cols, "opt", C)
    if np.any(X < 0) or np.any(T < 0):
        raise NoFeasibleTable("negative marginal counts")
    bad = np.flatnonzero(X.sum(axis=1) != T.sum(axis=1))
    if bad.size:
        raise NoFeasibleTable(f"{bad.size} precinct(s) have unbalanced margins, first at index {bad[0]}")
    check_nonempty_brackets(X, rows)
    fixed = None
    if cfg.fixed_alpha is not None:
        fixed = np.broadcast_to(np.asarray(cfg.fixed_alpha, dtype=float), (R, C))
        if np.any(fixed <= 0):
            raise ValidationError("fixed alpha must be positive")

    workers = _worker_count(cfg.chains)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda c: _run_chain(X, T, cfg, c, fixed), range(cfg.chains)))
    else:
        results = [_run_chain(X, T, cfg, c, fixed) for c in range(cfg.chains)]
    return _summarize(results, X, rows, cols, cfg)


def _summarize(results: list[_ChainResult], X, rows, cols, cfg: McmcConfig) -> PosteriorSummary:
    draws = np.stack([r.F for r in results])
    pooled = draws.reshape(-1, *draws.shape[2:])
    constant = np.ptp(pooled, axis=0) == 0
    mean = np.where(constant, pooled[0], pooled.mean(axis=0))
    sd = np.where(constant, 0.0, pooled.std(axis=0, ddof=1) if len(pooled) > 1 else 0.0)
    mean_matrix = cell_matrix(mean, rows, cols)
    ci_lo, ci_hi = np.percentile(pooled, [2.5, 97.5], axis=0)
    # a point mass at a boundary can leave the mean outside the central interval
    ci_lo = np.minimum(ci_lo, mean_matrix.beta)
    ci_hi = np.maximum(ci_hi, mean_matrix.beta)
    rhat = split_rhat(draws) if cfg.chains >= 2 else None
    ess = effective_sample_size(draws)
    ess = np.where(constant, float(pooled.shape[0]), ess)
    kept = sum(r.kept for r in results)
    n_mean = sum(r.n_sum for r in results) / kept
    Xf = X[:, :, None].astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        precinct_means = np.where(Xf > 0, n_mean / Xf, 0.0)
    notes = []
    if rhat is not None and np.any(rhat > RHAT_THRESHOLD):
        worst = np.unravel_index(np.argmax(rhat), rhat.shape)
        msg = (f"R-hat {float(rhat[worst]):.3f} > {RHAT_THRESHOLD} for cell "
               f"({rows[worst[0]]}, {cols[worst[1]]}); consider more iterations")
        warnings.warn(msg, NonConvergenceWarning, stacklevel=3)
        notes.append(msg)
    return PosteriorSummary(
        mean=mean_matrix, sd=sd, ci_lo=ci_lo, ci_hi=ci_hi, rhat=rhat,
        effective_samples=int(np.floor(ess.min())), ess=ess, precinct_means=precinct_means,
        alpha_mean=sum(r.alpha_sum for r in results) / kept,
        swap_acceptance=float(np.mean([r.swap_accept for r in results])),
        draws=draws, warnings=tuple(notes))


def md_fit(records: Sequence[PrecinctRecord], partition: BracketPartition | None = None,
           options: OptionSet | Sequence[str] | None = None,
           config: McmcConfig | None = None) -> PosteriorSummary:
    """Fit the hierarchical multinomial-Dirichlet model and summarize ``F``.

    ``F[g, p] = sum_i N[i, g, p] / sum_i X[i, g]`` is summarized over the
    post-burn-in, thinned draws of every chain.  Output is a deterministic
    function of the record order and ``config``.

    Raises
    ------
    NoFeasibleTable
        If some precinct's margins do not balance.
    EmptyBracket
        If no precinct has electors in some row.
    """
    X, T = marginals(records)
    check_partition(X, partition)
    return md_fit_arrays(X, T, config, rows=partition, cols=options)
