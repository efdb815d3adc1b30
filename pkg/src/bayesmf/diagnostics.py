"""Chain traces and convergence diagnostics.

Autocorrelations use the biased (divide-by-N) estimator, integrated
autocorrelation times follow the initial-positive-sequence truncation rule,
and reconstruction error is plain RMSE over the full matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ConstantSeriesError(ValueError):
    """Autocorrelation of a constant series is undefined."""


@dataclass
class ChainTrace:
    """Per-chain record: monitored scalar series (post burn-in, post
    thinning), the iteration index of each retained sample, the running-mean
    reconstruction, and sampler bookkeeping."""

    monitor_names: tuple[str, ...]
    iters: np.ndarray
    samples: np.ndarray
    recon_mean: np.ndarray | None = None
    acceptance_rate: float | None = None
    divergences: int = 0

    def __post_init__(self):
        self.monitor_names = tuple(self.monitor_names)
        self.iters = np.asarray(self.iters, dtype=np.int64)
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2 or self.samples.shape[1] != len(self.monitor_names):
            raise ValueError(
                f"samples must be (n, {len(self.monitor_names)}), got {self.samples.shape}")
        if self.iters.shape != (self.samples.shape[0],):
            raise ValueError("iters length disagrees with samples")
        if self.recon_mean is not None:
            self.recon_mean = np.asarray(self.recon_mean, dtype=np.float64)
            if self.recon_mean.ndim != 2:
                raise ValueError("recon_mean must be 2-d")
        if self.acceptance_rate is not None and not 0.0 <= self.acceptance_rate <= 1.0:
            raise ValueError(f"acceptance_rate out of [0, 1]: {self.acceptance_rate}")

    @property
    def n_samples(self) -> int:
        return int(self.samples.shape[0])

    def series(self, name: str) -> np.ndarray:
        if name not in self.monitor_names:
            raise KeyError(f"unknown monitor {name!r}; have {list(self.monitor_names)}")
        return self.samples[:, self.monitor_names.index(name)]


def autocorrelation(series, max_lag: int) -> np.ndarray:
    """Normalized autocorrelation rho(0..max_lag), biased estimator.

    rho(t) = c(t)/c(0) with c(t) = (1/N) sum_{s} (x_s - xbar)(x_{s+t} - xbar);
    rho(0) is exactly 1.  Requires len(series) >= max_lag + 2 and a
    non-constant series.
    """
    x = np.asarray(series, dtype=np.float64).ravel()
    n = x.size
    if max_lag < 0:
        raise ValueError("max_lag must be non-negative")
    if n < max_lag + 2:
        raise ValueError(f"series of length {n} too short for max_lag {max_lag}")
    if np.ptp(x) == 0:
        raise ConstantSeriesError("series is constant")
    xc = x - x.mean()
    # FFT of the zero-padded series gives all linear (non-circular) lags at once.
    f = np.fft.rfft(xc, 2 * n)
    acov = np.fft.irfft(f * np.conj(f))[:n] / n
    if acov[0] <= 0:
        raise ConstantSeriesError("series has zero variance")
    rho = acov[:max_lag + 1] / acov[0]
    rho[0] = 1.0
    return rho


def integrated_autocorrelation_time(series) -> float:
    """tau_int = 1 + 2 sum_t rho(t), summed while successive lag pairs
    rho(2k) + rho(2k+1) stay non-negative (initial-positive-sequence rule).

    The estimate is floored at 1/N, the resolution of the estimator, so the
    returned value is always positive.  Requires at least 100 samples.
    """
    x = np.asarray(series, dtype=np.float64).ravel()
    n = x.size
    if n < 100:
        raise ValueError(f"need at least 100 samples, got {n}")
    rho = autocorrelation(x, n - 2)
    npairs = rho.size // 2
    gamma = rho[0:2 * npairs:2] + rho[1:2 * npairs:2]
    negative = np.flatnonzero(gamma < 0)
    stop = int(negative[0]) if negative.size else npairs
    tau = 2.0 * float(np.sum(gamma[:stop])) - 1.0
    return max(tau, 1.0 / n)


def rmse(truth, estimate) -> float:
    """Root mean squared difference over all entries."""
    t = np.asarray(truth, dtype=np.float64)
    e = np.asarray(estimate, dtype=np.float64)
    if t.shape != e.shape:
        raise ValueError(f"shape mismatch: {t.shape} vs {e.shape}")
    if t.size == 0:
        raise ValueError("empty arrays")
    d = (t - e).ravel()
    return float(np.sqrt(d @ d / d.size))


@dataclass
class AggregateSummary:
    """Pooled statistics over several chains of the same run."""

    monitor_names: tuple[str, ...]
    n_chains: int
    pooled_mean: np.ndarray
    chain_means: np.ndarray
    chain_variances: np.ndarray
    chain_tau_int: np.ndarray
    recon_mean: np.ndarray | None = None


def aggregate_chains(traces) -> AggregateSummary:
    """Pool a list of ChainTrace objects with identical monitor sets.

    Per-chain tau_int entries are NaN where the estimator is undefined
    (fewer than 100 samples, or a constant series).
    """
    traces = list(traces)
    if not traces:
        raise ValueError("no traces given")
    names = traces[0].monitor_names
    for t in traces[1:]:
        if t.monitor_names != names:
            raise ValueError(
                f"monitor sets disagree: {t.monitor_names} vs {names}")
    k = len(names)
    chain_means = np.array([[t.samples[:, j].mean() for j in range(k)] for t in traces])
    chain_variances = np.array([[t.samples[:, j].var() for j in range(k)] for t in traces])
    chain_tau = np.full((len(traces), k), np.nan)
    for c, t in enumerate(traces):
        for j in range(k):
            try:
                chain_tau[c, j] = integrated_autocorrelation_time(t.samples[:, j])
            except (ValueError, ConstantSeriesError):
                pass
    pooled = np.concatenate([t.samples for t in traces], axis=0).mean(axis=0)
    recon = None
    if all(t.recon_mean is not None for t in traces):
        recon = np.mean([t.recon_mean for t in traces], axis=0)
    return AggregateSummary(names, len(traces), pooled, chain_means,
                            chain_variances, chain_tau, recon)
