"""Shared builders for the test suite."""

import numpy as np

from bayesmf import FactorModel, ObservationSet


def make_model(m, n, r, mean_a=None, mean_b=None, prec_a=None, prec_b=None,
               noise_shape=3.0, noise_rate=1e-2) -> FactorModel:
    """FactorModel with zero means and unit precisions unless overridden."""
    return FactorModel(
        m=m, n=n, r=r,
        mean_a=np.zeros((m, r)) if mean_a is None else np.asarray(mean_a, float),
        mean_b=np.zeros((n, r)) if mean_b is None else np.asarray(mean_b, float),
        prec_a=np.ones(r) if prec_a is None else np.asarray(prec_a, float),
        prec_b=np.ones(r) if prec_b is None else np.asarray(prec_b, float),
        noise_prior_shape=noise_shape, noise_prior_rate=noise_rate)


def random_blocked_model(rng, m, n, r, n_blocks=None, mean_sampler=None) -> FactorModel:
    """Random positive precisions whose products realize a prescribed number
    of ties: columns inside a block share the product exactly, products of
    different blocks are separated by a factor >= 1.4.

    ``mean_sampler(rng, shape)`` fills the mean matrices (zeros when None).
    """
    if n_blocks is None:
        n_blocks = int(rng.integers(1, r + 1))
    sizes = np.ones(n_blocks, dtype=int)
    for _ in range(r - n_blocks):
        sizes[rng.integers(0, n_blocks)] += 1
    products = float(rng.uniform(0.5, 2.0)) * 1.5 ** np.arange(n_blocks)
    prec_a = rng.uniform(0.5, 3.0, r)
    prec_b = np.empty(r)
    col = 0
    for size, product in zip(sizes, products):
        prec_b[col:col + size] = product / prec_a[col:col + size]
        col += size
    if mean_sampler is None:
        mean_a = np.zeros((m, r))
        mean_b = np.zeros((n, r))
    else:
        mean_a = mean_sampler(rng, (m, r))
        mean_b = mean_sampler(rng, (n, r))
    return FactorModel(m=m, n=n, r=r, mean_a=mean_a, mean_b=mean_b,
                       prec_a=prec_a, prec_b=prec_b)


def random_obs(rng, m, n, count=None, scale=2.0) -> ObservationSet:
    """Random observation set with distinct positions and N(0, scale^2) values."""
    if count is None:
        count = min(m * n, max(2, (m * n) // 3))
    flat = rng.choice(m * n, size=count, replace=False)
    return ObservationSet(m, n, [(int(f) // n, int(f) % n,
                                  float(rng.normal(0.0, scale)))
                                 for f in flat])
