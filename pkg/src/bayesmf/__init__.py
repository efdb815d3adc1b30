"""Bayesian low-rank matrix completion with posterior symmetry analysis."""

from .diagnostics import (AggregateSummary, ChainTrace, ConstantSeriesError,
                          aggregate_chains, autocorrelation,
                          integrated_autocorrelation_time, rmse)
from .model import (FactorModel, FactorState, ObservationSet, ShapeMismatchError,
                    grad_log_posterior, log_likelihood, log_posterior,
                    log_prior_a, log_prior_b, log_prior_noise, reconstruct,
                    residuals)
from .samplers import (GibbsConfig, HmcConfig, HmcTransition,
                       gibbs_noise_update, gibbs_row_update_a,
                       gibbs_row_update_b, hmc_step, hmc_transition,
                       init_from_prior, leapfrog, noise_conditional,
                       resolve_monitors, row_conditional_a, row_conditional_b,
                       run_gibbs_chain, run_hmc_chain)
from .symmetry import (FullColumnRankError, PartitionBlocks, SymmetryCertificate,
                       TransformCandidate, admissible_transform,
                       apply_transform, build_block_matrices,
                       certify_symmetry_breaking, compute_partition,
                       householder_invariance_transform, is_admissible_transform,
                       numerical_column_rank, random_block_orthogonal,
                       random_orthogonal, verify_invariance)

__version__ = "0.1.0"
