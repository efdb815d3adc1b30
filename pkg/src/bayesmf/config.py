"""Experiment configuration: a flat ``key = value`` text format plus the
construction of models and observation sets from a parsed config."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .io import UsageError, read_matrix_csv, read_observations_csv, _read_text
from .model import FactorModel, ObservationSet

# Sub-stream constant: the mean matrices are drawn from seed ^ MEAN_SEED_XOR
# so they never share a stream with any chain (chain c uses seed + c).
MEAN_SEED_XOR = 0x9E3779B9

_INT_KEYS = {"m", "n", "rank", "leapfrog_steps", "chains", "iterations",
             "burn_in", "thinning", "seed", "threads"}
_FLOAT_KEYS = {"mean_lo", "mean_hi", "tau_eta", "noise_shape", "noise_rate",
               "step_size"}
_STR_KEYS = {"mean_mode", "noise_mode", "sampler", "mean_path", "obs_path",
             "truth_path"}
_LIST_KEYS = {"tau_a", "tau_b", "monitors"}
CONFIG_KEYS = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS | _LIST_KEYS


@dataclass
class ExperimentConfig:
    """One experiment: model priors, data locations, sampler settings."""

    m: int
    n: int
    rank: int
    tau_a: tuple[float, ...] = (1.0,)
    tau_b: tuple[float, ...] = (1.0,)
    mean_mode: str = "zero"            # zero | uniform | file
    mean_lo: float = 0.0
    mean_hi: float = 1.0
    mean_path: str | None = None
    noise_mode: str = "gamma"          # gamma | fixed
    tau_eta: float = 1.0               # fixed value, or initial value in gamma mode
    noise_shape: float = 3.0
    noise_rate: float = 1e-2
    sampler: str = "gibbs"             # gibbs | hmc
    step_size: float = 0.01
    leapfrog_steps: int = 20
    chains: int = 1
    iterations: int = 1000
    burn_in: int = 100
    thinning: int = 1
    seed: int = 0
    monitors: tuple[str, ...] = ("A[0][0]",)
    obs_path: str | None = None
    truth_path: str | None = None
    threads: int = 1

    def validate(self) -> None:
        for name in ("m", "n", "rank", "chains", "iterations", "thinning", "threads"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.rank > min(self.m, self.n):
            raise UsageError(f"rank {self.rank} exceeds min(m, n) = {min(self.m, self.n)}")
        if not 0 <= self.burn_in < self.iterations:
            raise UsageError("burn_in must satisfy 0 <= burn_in < iterations")
        if self.seed < 0:
            raise UsageError("seed must be non-negative")
        if self.mean_mode not in ("zero", "uniform", "file"):
            raise UsageError(f"mean_mode must be zero, uniform or file, got {self.mean_mode!r}")
        if self.mean_mode == "uniform" and not self.mean_lo < self.mean_hi:
            raise UsageError("mean_lo must be < mean_hi for uniform means")
        if self.mean_mode == "file" and not self.mean_path:
            raise UsageError("mean_mode = file requires mean_path")
        if self.noise_mode not in ("gamma", "fixed"):
            raise UsageError(f"noise_mode must be gamma or fixed, got {self.noise_mode!r}")
        if self.sampler not in ("gibbs", "hmc"):
            raise UsageError(f"sampler must be gibbs or hmc, got {self.sampler!r}")
        if not self.tau_eta > 0:
            raise UsageError("tau_eta must be positive")
        if not (self.noise_shape > 0 and self.noise_rate > 0):
            raise UsageError("noise_shape and noise_rate must be positive")
        if not self.step_size > 0:
            raise UsageError("step_size must be positive")
        if self.leapfrog_steps < 1:
            raise UsageError("leapfrog_steps must be >= 1")
        for name in ("tau_a", "tau_b"):
            vals = getattr(self, name)
            if len(vals) not in (1, self.rank):
                raise UsageError(f"{name} must have 1 or rank = {self.rank} entries")
            if any(not v > 0 for v in vals):
                raise UsageError(f"{name} entries must be positive")
        if not self.monitors:
            raise UsageError("monitors must not be empty")


def _parse_value(key: str, raw: str, ln_no: int):
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key == "monitors":
            items = tuple(tok.strip() for tok in raw.split(",") if tok.strip())
            if not items:
                raise ValueError("empty monitor list")
            return items
        if key in ("tau_a", "tau_b"):
            return tuple(float(tok) for tok in raw.split(","))
        return raw
    except ValueError as e:
        raise UsageError(f"config line {ln_no}: bad value for {key}: {e}") from e


def parse_config(text: str, base_dir: str = ".") -> ExperimentConfig:
    """Parse the flat config format.  Blank lines and lines starting with
    ``#`` are ignored; unknown and duplicate keys are rejected with their
    line number; relative paths are resolved against ``base_dir``."""
    values: dict = {}
    for ln_no, ln in enumerate(text.splitlines(), 1):
        stripped = ln.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise UsageError(f"config line {ln_no}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in CONFIG_KEYS:
            raise UsageError(f"config line {ln_no}: unknown key {key!r}")
        if key in values:
            raise UsageError(f"config line {ln_no}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw, ln_no)
    for req in ("m", "n", "rank"):
        if req not in values:
            raise UsageError(f"config is missing required key {req!r}")
    for key in ("mean_path", "obs_path", "truth_path"):
        if key in values and not os.path.isabs(values[key]):
            values[key] = os.path.join(base_dir, values[key])
    cfg = ExperimentConfig(**values)
    cfg.validate()
    return cfg


def read_config(path) -> ExperimentConfig:
    return parse_config(_read_text(path), base_dir=os.path.dirname(os.path.abspath(path)))


def _broadcast(vals: tuple[float, ...], r: int) -> np.ndarray:
    return np.full(r, vals[0]) if len(vals) == 1 else np.array(vals, dtype=np.float64)


def build_model(cfg: ExperimentConfig) -> tuple[FactorModel, int | None]:
    """Construct the FactorModel a config describes.

    Returns the model and the derived seed used for the uniform mean draw
    (None unless mean_mode is uniform).  The mean matrices are drawn A
    first, then B, from ``default_rng(seed ^ MEAN_SEED_XOR)``.
    """
    m, n, r = cfg.m, cfg.n, cfg.rank
    mean_seed = None
    if cfg.mean_mode == "zero":
        mean_a = np.zeros((m, r))
        mean_b = np.zeros((n, r))
    elif cfg.mean_mode == "uniform":
        mean_seed = cfg.seed ^ MEAN_SEED_XOR
        rng = np.random.default_rng(mean_seed)
        mean_a = rng.uniform(cfg.mean_lo, cfg.mean_hi, (m, r))
        mean_b = rng.uniform(cfg.mean_lo, cfg.mean_hi, (n, r))
    else:
        stacked = read_matrix_csv(cfg.mean_path)
        if stacked.shape != (m + n, r):
            raise UsageError(
                f"{cfg.mean_path}: mean stack must be {(m + n, r)} "
                f"(mean_a over mean_b), got {stacked.shape}")
        mean_a, mean_b = stacked[:m], stacked[m:]
    try:
        model = FactorModel(m=m, n=n, r=r, mean_a=mean_a, mean_b=mean_b,
                            prec_a=_broadcast(cfg.tau_a, r),
                            prec_b=_broadcast(cfg.tau_b, r),
                            noise_prior_shape=cfg.noise_shape,
                            noise_prior_rate=cfg.noise_rate)
    except ValueError as e:
        raise UsageError(f"invalid model: {e}") from e
    return model, mean_seed


def build_observations(cfg: ExperimentConfig) -> ObservationSet:
    if not cfg.obs_path:
        raise UsageError("config must set obs_path")
    entries = read_observations_csv(cfg.obs_path)
    try:
        return ObservationSet(cfg.m, cfg.n, entries)
    except ValueError as e:
        raise UsageError(f"{cfg.obs_path}: {e}") from e
