"""Model definition and exact posterior evaluation for Bayesian low-rank
matrix completion.

A rank-``r`` factorization ``X = A B^T`` is fit to sparsely observed entries
of an ``m x n`` matrix.  Each factor column carries an independent isotropic
Gaussian prior with its own precision, observation noise is Gaussian with
precision ``tau_eta``, and ``tau_eta`` itself may carry a Gamma prior
(shape-rate parameterization).  Log densities keep their normalizing
constants; only the data evidence term is dropped, so log-posterior values
are comparable across states of the same model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ShapeMismatchError(ValueError):
    """An array argument disagrees with the model dimensions."""


def _readonly(x, dtype=np.float64) -> np.ndarray:
    out = np.array(x, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class FactorModel:
    """Dimensions and priors of the factorization.

    Parameters
    ----------
    m, n : int
        Shape of the matrix being completed.
    r : int
        Factorization rank; must satisfy ``r <= min(m, n)``.
    mean_a : array, shape (m, r)
        Prior means of the row-factor columns.
    mean_b : array, shape (n, r)
        Prior means of the column-factor columns.
    prec_a, prec_b : array, shape (r,)
        Strictly positive per-column prior precisions.
    noise_prior_shape, noise_prior_rate : float
        Gamma prior on the noise precision, mean = shape / rate.
    """

    m: int
    n: int
    r: int
    mean_a: np.ndarray
    mean_b: np.ndarray
    prec_a: np.ndarray
    prec_b: np.ndarray
    noise_prior_shape: float = 3.0
    noise_prior_rate: float = 1e-2

    def __post_init__(self):
        for name in ("m", "n", "r"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.r > min(self.m, self.n):
            raise ValueError(f"rank {self.r} exceeds min(m, n) = {min(self.m, self.n)}")
        object.__setattr__(self, "mean_a", _readonly(self.mean_a))
        object.__setattr__(self, "mean_b", _readonly(self.mean_b))
        object.__setattr__(self, "prec_a", _readonly(self.prec_a))
        object.__setattr__(self, "prec_b", _readonly(self.prec_b))
        if self.mean_a.shape != (self.m, self.r):
            raise ShapeMismatchError(
                f"mean_a has shape {self.mean_a.shape}, expected {(self.m, self.r)}")
        if self.mean_b.shape != (self.n, self.r):
            raise ShapeMismatchError(
                f"mean_b has shape {self.mean_b.shape}, expected {(self.n, self.r)}")
        for name in ("mean_a", "mean_b"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite entries")
        for name in ("prec_a", "prec_b"):
            v = getattr(self, name)
            if v.shape != (self.r,):
                raise ShapeMismatchError(f"{name} has shape {v.shape}, expected ({self.r},)")
            if not np.all(np.isfinite(v)) or np.any(v <= 0):
                raise ValueError(f"{name} must be strictly positive and finite")
        for name in ("noise_prior_shape", "noise_prior_rate"):
            v = float(getattr(self, name))
            object.__setattr__(self, name, v)
            if not math.isfinite(v) or v <= 0:
                raise ValueError(f"{name} must be strictly positive, got {v!r}")


class ObservationSet:
    """Observed entries of an ``m x n`` matrix, held in lexicographic
    ``(row, col)`` order with per-row and per-column groupings precomputed.

    Parameters
    ----------
    m, n : int
        Host matrix shape.
    entries : iterable of (row, col, value)
        0-based indices; duplicate positions are rejected.
    """

    def __init__(self, m: int, n: int, entries):
        if m < 1 or n < 1:
            raise ValueError("m and n must be positive")
        self.m = int(m)
        self.n = int(n)
        entries = list(entries)
        rows = np.array([e[0] for e in entries])
        cols = np.array([e[1] for e in entries])
        values = np.array([e[2] for e in entries], dtype=np.float64)
        if rows.size and (not np.issubdtype(rows.dtype, np.integer)
                          or not np.issubdtype(cols.dtype, np.integer)):
            raise ValueError("row and col indices must be integers")
        rows = rows.astype(np.int64) if rows.size else np.zeros(0, dtype=np.int64)
        cols = cols.astype(np.int64) if cols.size else np.zeros(0, dtype=np.int64)
        if rows.size:
            if rows.min() < 0 or rows.max() >= self.m:
                raise ValueError("row index out of range")
            if cols.min() < 0 or cols.max() >= self.n:
                raise ValueError("col index out of range")
            if not np.all(np.isfinite(values)):
                raise ValueError("observation values must be finite")
        order = np.lexsort((cols, rows))
        self.rows = _readonly(rows[order], dtype=np.int64)
        self.cols = _readonly(cols[order], dtype=np.int64)
        self.values = _readonly(values[order])
        if self.rows.size:
            same = (np.diff(self.rows) == 0) & (np.diff(self.cols) == 0)
            if np.any(same):
                k = int(np.flatnonzero(same)[0])
                raise ValueError(
                    f"duplicate observation at ({self.rows[k]}, {self.cols[k]})")
        # CSR-style pointers: rows are contiguous after the lexsort, and
        # col_order re-sorts the same entries by (col, row).
        self._row_ptr = np.searchsorted(self.rows, np.arange(self.m + 1))
        self._col_order = np.lexsort((self.rows, self.cols))
        self._col_ptr = np.searchsorted(self.cols[self._col_order],
                                        np.arange(self.n + 1))

    def __len__(self) -> int:
        return int(self.rows.size)

    @property
    def entries(self) -> list[tuple[int, int, float]]:
        return [(int(i), int(j), float(v))
                for i, j, v in zip(self.rows, self.cols, self.values)]

    def row_observations(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Column indices and values observed in row ``i``."""
        lo, hi = self._row_ptr[i], self._row_ptr[i + 1]
        return self.cols[lo:hi], self.values[lo:hi]

    def col_observations(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Row indices and values observed in column ``j``."""
        idx = self._col_order[self._col_ptr[j]:self._col_ptr[j + 1]]
        return self.rows[idx], self.values[idx]


@dataclass
class FactorState:
    """One point of the sampler state space: factor matrices plus the
    current noise precision.  Owned by exactly one chain; use :meth:`copy`
    before handing a state to a second consumer."""

    a: np.ndarray
    b: np.ndarray
    noise_prec: float

    def __post_init__(self):
        self.a = np.array(self.a, dtype=np.float64)
        self.b = np.array(self.b, dtype=np.float64)
        if self.a.ndim != 2 or self.b.ndim != 2:
            raise ShapeMismatchError("factor matrices must be 2-d")
        if self.a.shape[1] != self.b.shape[1]:
            raise ShapeMismatchError(
                f"factor ranks disagree: {self.a.shape[1]} vs {self.b.shape[1]}")
        self.noise_prec = float(self.noise_prec)
        if not math.isfinite(self.noise_prec) or self.noise_prec <= 0:
            raise ValueError(f"noise_prec must be strictly positive, got {self.noise_prec!r}")

    def copy(self) -> "FactorState":
        return FactorState(self.a.copy(), self.b.copy(), self.noise_prec)


def _check_state(model: FactorModel, state: FactorState) -> None:
    if state.a.shape != (model.m, model.r):
        raise ShapeMismatchError(
            f"state.a has shape {state.a.shape}, expected {(model.m, model.r)}")
    if state.b.shape != (model.n, model.r):
        raise ShapeMismatchError(
            f"state.b has shape {state.b.shape}, expected {(model.n, model.r)}")


def _check_obs(model: FactorModel, obs: ObservationSet) -> None:
    if (obs.m, obs.n) != (model.m, model.n):
        raise ShapeMismatchError(
            f"observations are {obs.m} x {obs.n}, model is {model.m} x {model.n}")


def residuals(obs: ObservationSet, state: FactorState) -> np.ndarray:
    """Per-observation residuals ``y - a_row . b_row`` in storage order."""
    fitted = np.einsum("ik,ik->i", state.a[obs.rows], state.b[obs.cols])
    return obs.values - fitted


def log_prior_a(model: FactorModel, state: FactorState) -> float:
    """Log density of the row factors under their column-wise Gaussian prior."""
    _check_state(model, state)
    d = state.a - model.mean_a
    quad = float(model.prec_a @ np.einsum("ik,ik->k", d, d))
    norm = 0.5 * model.m * float(np.sum(np.log(model.prec_a) - math.log(2 * math.pi)))
    return norm - 0.5 * quad


def log_prior_b(model: FactorModel, state: FactorState) -> float:
    """Log density of the column factors under their column-wise Gaussian prior."""
    _check_state(model, state)
    d = state.b - model.mean_b
    quad = float(model.prec_b @ np.einsum("ik,ik->k", d, d))
    norm = 0.5 * model.n * float(np.sum(np.log(model.prec_b) - math.log(2 * math.pi)))
    return norm - 0.5 * quad


def log_prior_noise(model: FactorModel, state: FactorState) -> float:
    """Log Gamma(shape, rate) density of the current noise precision."""
    shape, rate = model.noise_prior_shape, model.noise_prior_rate
    tau = state.noise_prec
    return (shape * math.log(rate) - math.lgamma(shape)
            + (shape - 1.0) * math.log(tau) - rate * tau)


def log_likelihood(model: FactorModel, obs: ObservationSet, state: FactorState) -> float:
    """Gaussian log likelihood of the observed entries.

    Each observation contributes ``0.5 ln(tau_eta / 2 pi)`` minus
    ``0.5 tau_eta`` times its squared residual; an empty observation set
    contributes exactly 0.
    """
    _check_state(model, state)
    _check_obs(model, obs)
    k = len(obs)
    if k == 0:
        return 0.0
    res = residuals(obs, state)
    return (0.5 * k * math.log(state.noise_prec / (2 * math.pi))
            - 0.5 * state.noise_prec * float(res @ res))


def log_posterior(model: FactorModel, obs: ObservationSet, state: FactorState,
                  include_noise_prior: bool = False) -> float:
    """Unnormalized log posterior (evidence dropped, all other constants kept).

    With ``include_noise_prior=False`` the noise precision is treated as a
    fixed constant; with ``True`` the Gamma prior term is added, matching
    the hierarchical model the samplers target.
    """
    total = (log_prior_a(model, state) + log_prior_b(model, state)
             + log_likelihood(model, obs, state))
    if include_noise_prior:
        total += log_prior_noise(model, state)
    return total


def grad_log_posterior(model: FactorModel, obs: ObservationSet, state: FactorState,
                       include_likelihood: bool = True):
    """Gradient of the log posterior with respect to the factor matrices.

    Returns ``(grad_a, grad_b)`` with the shapes of ``a`` and ``b``.  The
    noise precision is held fixed.  ``include_likelihood=False`` evaluates
    the ``tau_eta -> 0`` limit, leaving only the prior pull toward the means.
    """
    _check_state(model, state)
    _check_obs(model, obs)
    ga = -(state.a - model.mean_a) * model.prec_a
    gb = -(state.b - model.mean_b) * model.prec_b
    if include_likelihood and len(obs) > 0:
        w = state.noise_prec * residuals(obs, state)
        np.add.at(ga, obs.rows, w[:, None] * state.b[obs.cols])
        np.add.at(gb, obs.cols, w[:, None] * state.a[obs.rows])
    return ga, gb


def reconstruct(state: FactorState) -> np.ndarray:
    """Dense reconstruction ``A B^T`` of the completed matrix."""
    return state.a @ state.b.T
