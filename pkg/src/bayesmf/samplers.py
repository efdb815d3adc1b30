"""Gibbs and Hamiltonian Monte Carlo samplers for the factorization model.

The Gibbs sweep updates the rows of A (ascending), then the rows of B
(ascending), then optionally the noise precision from its conjugate Gamma
conditional.  The HMC variant replaces the factor updates with a single
leapfrog trajectory at fixed noise precision and keeps the interleaved
Gibbs step for the noise.  Chains are deterministic functions of their
config seed.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .diagnostics import ChainTrace
from .model import (FactorModel, FactorState, ObservationSet, _check_obs,
                    _check_state, grad_log_posterior, log_posterior, residuals)


@dataclass(frozen=True)
class GibbsConfig:
    """Chain-length bookkeeping shared by both samplers."""

    iterations: int
    burn_in: int = 0
    thinning: int = 1
    seed: int = 0
    sample_noise_precision: bool = True

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must satisfy 0 <= burn_in < iterations")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")


@dataclass(frozen=True)
class HmcConfig(GibbsConfig):
    step_size: float = 0.01
    leapfrog_steps: int = 20

    def __post_init__(self):
        super().__post_init__()
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.leapfrog_steps < 1:
            raise ValueError("leapfrog_steps must be >= 1")


_MONITOR_RE = re.compile(r"^([AB])\[(\d+)\]\[(\d+)\]$")


def resolve_monitors(model: FactorModel, names) -> list[tuple[str, int, int]]:
    """Parse monitor names like ``A[0][0]``, ``B[3][1]`` or ``tau_eta`` and
    bounds-check them against the model."""
    resolved = []
    for name in names:
        if name == "tau_eta":
            resolved.append(("tau_eta", 0, 0))
            continue
        mt = _MONITOR_RE.match(name)
        if mt is None:
            raise ValueError(
                f"bad monitor {name!r}: expected A[i][j], B[i][j] or tau_eta")
        which, i, j = mt.group(1), int(mt.group(2)), int(mt.group(3))
        rows = model.m if which == "A" else model.n
        if i >= rows or j >= model.r:
            raise ValueError(f"monitor {name!r} out of range for "
                             f"{which} ({rows} x {model.r})")
        resolved.append((which, i, j))
    return resolved


def _monitor_values(state: FactorState, resolved) -> list[float]:
    out = []
    for which, i, j in resolved:
        if which == "tau_eta":
            out.append(state.noise_prec)
        elif which == "A":
            out.append(float(state.a[i, j]))
        else:
            out.append(float(state.b[i, j]))
    return out


def init_from_prior(model: FactorModel, rng: np.random.Generator,
                    noise_init: float = 1.0) -> FactorState:
    """Draw the factors from their priors (A first, then B); the noise
    precision starts at ``noise_init``."""
    a = model.mean_a + rng.standard_normal((model.m, model.r)) / np.sqrt(model.prec_a)
    b = model.mean_b + rng.standard_normal((model.n, model.r)) / np.sqrt(model.prec_b)
    return FactorState(a, b, float(noise_init))


def row_conditional_a(model: FactorModel, obs: ObservationSet,
                      state: FactorState, i: int):
    """Gaussian conditional of row i of A given B, tau_eta and the data,
    as (mean, precision matrix)."""
    cols, vals = obs.row_observations(i)
    rhs = model.prec_a * model.mean_a[i]
    if cols.size:
        bsub = state.b[cols]
        prec = np.diag(model.prec_a) + state.noise_prec * (bsub.T @ bsub)
        rhs = rhs + state.noise_prec * (bsub.T @ vals)
    else:
        prec = np.diag(model.prec_a)
    return np.linalg.solve(prec, rhs), prec


def row_conditional_b(model: FactorModel, obs: ObservationSet,
                      state: FactorState, j: int):
    """Gaussian conditional of row j of B given A, tau_eta and the data."""
    rows, vals = obs.col_observations(j)
    rhs = model.prec_b * model.mean_b[j]
    if rows.size:
        asub = state.a[rows]
        prec = np.diag(model.prec_b) + state.noise_prec * (asub.T @ asub)
        rhs = rhs + state.noise_prec * (asub.T @ vals)
    else:
        prec = np.diag(model.prec_b)
    return np.linalg.solve(prec, rhs), prec


def _sample_gaussian(mean: np.ndarray, prec: np.ndarray,
                     rng: np.random.Generator) -> np.ndarray:
    # x = mean + L^-T z has covariance (L L^T)^-1 = prec^-1
    chol = np.linalg.cholesky(prec)
    return mean + np.linalg.solve(chol.T, rng.standard_normal(mean.size))


def gibbs_row_update_a(model: FactorModel, obs: ObservationSet, state: FactorState,
                       row_index: int, rng: np.random.Generator) -> np.ndarray:
    """Sample row ``row_index`` of A from its conditional."""
    mean, prec = row_conditional_a(model, obs, state, row_index)
    return _sample_gaussian(mean, prec, rng)


def gibbs_row_update_b(model: FactorModel, obs: ObservationSet, state: FactorState,
                       row_index: int, rng: np.random.Generator) -> np.ndarray:
    """Sample row ``row_index`` of B from its conditional."""
    mean, prec = row_conditional_b(model, obs, state, row_index)
    return _sample_gaussian(mean, prec, rng)


def noise_conditional(model: FactorModel, obs: ObservationSet,
                      state: FactorState) -> tuple[float, float]:
    """Gamma (shape, rate) of the noise-precision conditional."""
    res = residuals(obs, state)
    shape = model.noise_prior_shape + 0.5 * len(obs)
    rate = model.noise_prior_rate + 0.5 * float(res @ res)
    return shape, rate


def gibbs_noise_update(model: FactorModel, obs: ObservationSet, state: FactorState,
                       rng: np.random.Generator) -> float:
    """Sample the noise precision from its conjugate Gamma conditional."""
    shape, rate = noise_conditional(model, obs, state)
    return float(rng.gamma(shape, 1.0 / rate))


def run_gibbs_chain(model: FactorModel, obs: ObservationSet, config: GibbsConfig,
                    init: FactorState, monitors) -> ChainTrace:
    """Run one Gibbs chain and return its trace.

    A sample is retained after the sweep of iteration ``it`` whenever
    ``it >= burn_in`` and ``(it - burn_in) % thinning == 0``; the
    reconstruction accumulator averages ``A B^T`` over exactly the retained
    sweeps.
    """
    _check_state(model, init)
    _check_obs(model, obs)
    resolved = resolve_monitors(model, monitors)
    state = init.copy()
    rng = np.random.default_rng(config.seed)
    kept_iters, rows = [], []
    recon_sum = np.zeros((model.m, model.n))
    for it in range(config.iterations):
        for i in range(model.m):
            state.a[i] = gibbs_row_update_a(model, obs, state, i, rng)
        for j in range(model.n):
            state.b[j] = gibbs_row_update_b(model, obs, state, j, rng)
        if config.sample_noise_precision:
            state.noise_prec = gibbs_noise_update(model, obs, state, rng)
        if it >= config.burn_in and (it - config.burn_in) % config.thinning == 0:
            kept_iters.append(it)
            rows.append(_monitor_values(state, resolved))
            recon_sum += state.a @ state.b.T
    kept = len(kept_iters)
    return ChainTrace(tuple(monitors), np.array(kept_iters),
                      np.array(rows).reshape(kept, len(resolved)),
                      recon_mean=recon_sum / kept)


def leapfrog(model: FactorModel, obs: ObservationSet, state: FactorState,
             mom_a: np.ndarray, mom_b: np.ndarray,
             step_size: float, n_steps: int):
    """Leapfrog integration of (factors, momenta) under the log posterior at
    fixed noise precision, identity mass matrix.  Returns the new state and
    momenta; the input state is not modified."""
    work = state.copy()
    pa = mom_a.copy()
    pb = mom_b.copy()
    ga, gb = grad_log_posterior(model, obs, work)
    pa += 0.5 * step_size * ga
    pb += 0.5 * step_size * gb
    for step in range(n_steps):
        work.a += step_size * pa
        work.b += step_size * pb
        ga, gb = grad_log_posterior(model, obs, work)
        if step < n_steps - 1:
            pa += step_size * ga
            pb += step_size * gb
    pa += 0.5 * step_size * ga
    pb += 0.5 * step_size * gb
    return work, pa, pb


@dataclass
class HmcTransition:
    state: FactorState
    accepted: bool
    diverged: bool
    energy_error: float


def hmc_transition(model: FactorModel, obs: ObservationSet, state: FactorState,
                   config: HmcConfig, rng: np.random.Generator) -> HmcTransition:
    """One HMC proposal/accept step at fixed noise precision.

    A non-finite Hamiltonian difference rejects automatically and marks the
    transition as divergent.
    """
    pa = rng.standard_normal(state.a.shape)
    pb = rng.standard_normal(state.b.shape)
    h0 = -log_posterior(model, obs, state) + 0.5 * (float(np.sum(pa * pa))
                                                    + float(np.sum(pb * pb)))
    # overflow along an unstable trajectory is expected; it surfaces as a
    # non-finite energy difference and rejects below
    with np.errstate(over="ignore", invalid="ignore"):
        prop, qa, qb = leapfrog(model, obs, state, pa, pb,
                                config.step_size, config.leapfrog_steps)
        h1 = -log_posterior(model, obs, prop) + 0.5 * (float(np.sum(qa * qa))
                                                       + float(np.sum(qb * qb)))
    dh = h1 - h0
    if not math.isfinite(dh):
        return HmcTransition(state.copy(), False, True, math.inf)
    if dh <= 0.0 or rng.random() < math.exp(-dh):
        return HmcTransition(prop, True, False, dh)
    return HmcTransition(state.copy(), False, False, dh)


def hmc_step(model: FactorModel, obs: ObservationSet, state: FactorState,
             config: HmcConfig, rng: np.random.Generator):
    """One HMC transition; returns (new state, accepted)."""
    t = hmc_transition(model, obs, state, config, rng)
    return t.state, t.accepted


def run_hmc_chain(model: FactorModel, obs: ObservationSet, config: HmcConfig,
                  init: FactorState, monitors) -> ChainTrace:
    """Run one HMC chain; the noise precision is refreshed by an interleaved
    Gibbs step after each trajectory when ``sample_noise_precision`` is set.

    The noise refresh keeps far-out starts self-correcting: a first
    trajectory from a poor init diverges and is rejected, the conjugate
    update then drops the precision to match the residuals, and fit and
    precision climb back together.  The trace records the overall
    acceptance rate and divergence count."""
    _check_state(model, init)
    _check_obs(model, obs)
    resolved = resolve_monitors(model, monitors)
    state = init.copy()
    rng = np.random.default_rng(config.seed)
    kept_iters, rows = [], []
    recon_sum = np.zeros((model.m, model.n))
    accepted = 0
    diverged = 0
    for it in range(config.iterations):
        t = hmc_transition(model, obs, state, config, rng)
        state = t.state
        accepted += t.accepted
        diverged += t.diverged
        if config.sample_noise_precision:
            state.noise_prec = gibbs_noise_update(model, obs, state, rng)
        if it >= config.burn_in and (it - config.burn_in) % config.thinning == 0:
            kept_iters.append(it)
            rows.append(_monitor_values(state, resolved))
            recon_sum += state.a @ state.b.T
    kept = len(kept_iters)
    return ChainTrace(tuple(monitors), np.array(kept_iters),
                      np.array(rows).reshape(kept, len(resolved)),
                      recon_mean=recon_sum / kept,
                      acceptance_rate=accepted / config.iterations,
                      divergences=diverged)
