"""Convergence diagnostics for multi-chain samples.

Arrays are shaped ``(chains, draws, *cell_shape)``; results have ``cell_shape``.
"""
from __future__ import annotations

import numpy as np


def _split(samples: np.ndarray) -> np.ndarray:
    m, n = samples.shape[:2]
    half = n // 2
    if half < 2:
        return samples
    first = samples[:, :half]
    second = samples[:, n - half:]
    return np.concatenate([first, second], axis=0)


def split_rhat(samples: np.ndarray) -> np.ndarray:
    """Split-chain potential scale reduction factor (Gelman-Rubin on half chains).

    Constant cells (zero within- and between-chain variance) report 1.0.
    """
    s = _split(np.asarray(samples, dtype=float))
    m, n = s.shape[:2]
    chain_means = s.mean(axis=1)
    within = s.var(axis=1, ddof=1).mean(axis=0)
    between = n * chain_means.var(axis=0, ddof=1) if m > 1 else np.zeros_like(within)
    var_plus = (n - 1) / n * within + between / n
    with np.errstate(invalid="ignore", divide="ignore"):
        rhat = np.sqrt(var_plus / within)
    rhat = np.where(within > 0, rhat, np.where(between > 0, np.inf, 1.0))
    return rhat


def _autocov(x: np.ndarray) -> np.ndarray:
    """Autocovariance along the last axis via FFT (biased estimator)."""
    n = x.shape[-1]
    x = x - x.mean(axis=-1, keepdims=True)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, n=size, axis=-1)
    acov = np.fft.irfft(f * np.conj(f), n=size, axis=-1)[..., :n]
    return acov / n


def effective_sample_size(samples: np.ndarray) -> np.ndarray:
    """Multi-chain ESS with Geyer's initial monotone sequence truncation."""
    s = np.asarray(samples, dtype=float)
    m, n = s.shape[:2]
    cell_shape = s.shape[2:]
    flat = s.reshape(m, n, -1)
    out = np.empty(flat.shape[2])
    for k in range(flat.shape[2]):
        x = flat[:, :, k]
        acov = _autocov(x)
        chain_var = acov[:, 0] * n / (n - 1) if n > 1 else acov[:, 0]
        within = chain_var.mean()
        var_plus = within * (n - 1) / n
        if m > 1:
            var_plus += x.mean(axis=1).var(ddof=1)
        if var_plus <= 0 or n < 4:
            out[k] = float(m * n)
            continue
        rho = 1.0 - (within - acov.mean(axis=0)) / var_plus
        rho[0] = 1.0
        # sum consecutive pairs while positive, enforcing monotone decrease
        pairs = rho[: (n // 2) * 2].reshape(-1, 2).sum(axis=1)
        tau_pairs = []
        prev = np.inf
        for pv in pairs:
            if pv <= 0:
                break
            prev = min(prev, pv)
            tau_pairs.append(prev)
        tau = -1.0 + 2.0 * float(np.sum(tau_pairs)) if tau_pairs else 1.0
        tau = max(tau, 1.0 / np.log10(m * n))
        out[k] = m * n / tau
    return out.reshape(cell_shape)
