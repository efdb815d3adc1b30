"""Exact-value, invariance and gradient checks for the model core."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bayesmf import (FactorModel, FactorState, ObservationSet, ShapeMismatchError,
                     grad_log_posterior, log_likelihood, log_posterior,
                     log_prior_a, log_prior_b, log_prior_noise, reconstruct)
from conftest import make_model, random_obs


def scalar_setup():
    model = make_model(1, 1, 1)
    obs = ObservationSet(1, 1, [(0, 0, 2.0)])
    state = FactorState([[1.0]], [[2.0]], 1.0)
    return model, obs, state


def finite_difference_grad(model, obs, state, h=1e-6):
    """Central-difference gradient of log_posterior in the factor entries."""
    def lp(a, b):
        return log_posterior(model, obs, FactorState(a, b, state.noise_prec))

    ga = np.zeros_like(state.a)
    for idx in np.ndindex(*state.a.shape):
        up, dn = state.a.copy(), state.a.copy()
        up[idx] += h
        dn[idx] -= h
        ga[idx] = (lp(up, state.b) - lp(dn, state.b)) / (2 * h)
    gb = np.zeros_like(state.b)
    for idx in np.ndindex(*state.b.shape):
        up, dn = state.b.copy(), state.b.copy()
        up[idx] += h
        dn[idx] -= h
        gb[idx] = (lp(state.a, up) - lp(state.a, dn)) / (2 * h)
    return ga, gb


class TestLogLikelihood:
    def test_single_entry_zero_residual_hand_value(self):
        model, obs, state = scalar_setup()
        expected = 0.5 * math.log(1.0 / (2 * math.pi))
        assert log_likelihood(model, obs, state) == pytest.approx(expected, abs=1e-12)

    def test_empty_observation_set_contributes_zero(self):
        model, _, state = scalar_setup()
        assert log_likelihood(model, ObservationSet(1, 1, []), state) == 0.0

    def test_invariant_under_any_invertible_transform(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            m, n, r = 5, 6, 3
            model = make_model(m, n, r)
            obs = random_obs(rng, m, n)
            state = FactorState(rng.standard_normal((m, r)),
                                rng.standard_normal((n, r)), 1.7)
            w = rng.standard_normal((r, r))
            s = np.linalg.svd(w, compute_uv=False)
            if s[-1] < 1e-6 * s[0]:
                continue
            moved = FactorState(state.a @ w, np.linalg.solve(w, state.b.T).T,
                                state.noise_prec)
            base = log_likelihood(model, obs, state)
            assert log_likelihood(model, obs, moved) == pytest.approx(
                base, rel=1e-9, abs=1e-9)

    def test_shape_mismatch_raises(self):
        model, obs, _ = scalar_setup()
        bad = FactorState(np.zeros((2, 1)), np.zeros((1, 1)), 1.0)
        with pytest.raises(ShapeMismatchError):
            log_likelihood(model, obs, bad)
        with pytest.raises(ShapeMismatchError):
            log_likelihood(model, ObservationSet(3, 1, []),
                           FactorState([[1.0]], [[1.0]], 1.0))


class TestLogPosterior:
    def test_scalar_hand_value_fixed_noise(self):
        model, obs, state = scalar_setup()
        expected = 1.5 * math.log(1.0 / (2 * math.pi)) - 0.5 - 2.0
        assert log_posterior(model, obs, state) == pytest.approx(expected, abs=1e-9)

    def test_decomposes_into_exact_term_sum(self):
        rng = np.random.default_rng(3)
        model = make_model(4, 3, 2, prec_a=[1.0, 2.0], prec_b=[0.5, 3.0])
        obs = random_obs(rng, 4, 3)
        state = FactorState(rng.standard_normal((4, 2)),
                            rng.standard_normal((3, 2)), 2.5)
        parts = (log_prior_a(model, state) + log_prior_b(model, state)
                 + log_likelihood(model, obs, state))
        assert log_posterior(model, obs, state) == parts
        assert (log_posterior(model, obs, state, include_noise_prior=True)
                == parts + log_prior_noise(model, state))

    def test_noise_prior_flag_adds_gamma_log_density(self):
        model, obs, state = scalar_setup()
        shape, rate = model.noise_prior_shape, model.noise_prior_rate
        tau = state.noise_prec
        gamma_term = (shape * math.log(rate) - math.lgamma(shape)
                      + (shape - 1) * math.log(tau) - rate * tau)
        diff = (log_posterior(model, obs, state, include_noise_prior=True)
                - log_posterior(model, obs, state))
        assert diff == pytest.approx(gamma_term, rel=1e-12)

    def test_orthogonal_transform_preserves_zero_mean_posterior(self):
        rng = np.random.default_rng(11)
        m, n, r = 5, 4, 3
        model = make_model(m, n, r, prec_a=[2.0, 2.0, 2.0], prec_b=[0.7, 0.7, 0.7])
        obs = random_obs(rng, m, n)
        q, _ = np.linalg.qr(rng.standard_normal((r, r)))
        for _ in range(5):
            state = FactorState(rng.standard_normal((m, r)),
                                rng.standard_normal((n, r)), 1.0)
            moved = FactorState(state.a @ q, np.linalg.solve(q, state.b.T).T, 1.0)
            assert log_posterior(model, obs, moved) == pytest.approx(
                log_posterior(model, obs, state), rel=1e-9)

    def test_orthogonal_transform_shifts_nonzero_mean_posterior(self):
        rng = np.random.default_rng(13)
        m, n, r = 5, 4, 3
        model = make_model(m, n, r,
                           mean_a=rng.uniform(0, 1, (m, r)),
                           mean_b=rng.uniform(0, 1, (n, r)))
        obs = random_obs(rng, m, n)
        q, _ = np.linalg.qr(rng.standard_normal((r, r)))
        assert np.max(np.abs(q - np.eye(r))) > 1e-3
        state = FactorState(rng.standard_normal((m, r)),
                            rng.standard_normal((n, r)), 1.0)
        moved = FactorState(state.a @ q, np.linalg.solve(q, state.b.T).T, 1.0)
        assert abs(log_posterior(model, obs, moved)
                   - log_posterior(model, obs, state)) > 1e-4


class TestGradient:
    def test_zero_at_prior_mode_without_data(self):
        rng = np.random.default_rng(5)
        mean_a = rng.standard_normal((4, 2))
        mean_b = rng.standard_normal((3, 2))
        model = make_model(4, 3, 2, mean_a=mean_a, mean_b=mean_b,
                           prec_a=[2.0, 0.5], prec_b=[1.0, 4.0])
        state = FactorState(mean_a, mean_b, 1.0)
        ga, gb = grad_log_posterior(model, ObservationSet(4, 3, []), state)
        np.testing.assert_allclose(ga, 0.0, atol=1e-14)
        np.testing.assert_allclose(gb, 0.0, atol=1e-14)

    def test_matches_central_finite_differences(self):
        rng = np.random.default_rng(17)
        for _ in range(5):
            m, n, r = 6, 5, 3
            model = make_model(m, n, r,
                               mean_a=rng.uniform(-1, 1, (m, r)),
                               mean_b=rng.uniform(-1, 1, (n, r)),
                               prec_a=rng.uniform(0.5, 3, r),
                               prec_b=rng.uniform(0.5, 3, r))
            obs = random_obs(rng, m, n)
            state = FactorState(rng.uniform(-2, 2, (m, r)),
                                rng.uniform(-2, 2, (n, r)), 1.3)
            ga, gb = grad_log_posterior(model, obs, state)
            fa, fb = finite_difference_grad(model, obs, state)
            np.testing.assert_allclose(ga, fa, rtol=1e-5, atol=1e-6)
            np.testing.assert_allclose(gb, fb, rtol=1e-5, atol=1e-6)

    def test_likelihood_flag_off_leaves_prior_pull(self):
        rng = np.random.default_rng(19)
        model = make_model(3, 3, 2, prec_a=[2.0, 3.0], prec_b=[1.0, 0.5])
        obs = random_obs(rng, 3, 3)
        state = FactorState(rng.standard_normal((3, 2)),
                            rng.standard_normal((3, 2)), 5.0)
        ga, gb = grad_log_posterior(model, obs, state, include_likelihood=False)
        np.testing.assert_allclose(ga, -(state.a - model.mean_a) * model.prec_a)
        np.testing.assert_allclose(gb, -(state.b - model.mean_b) * model.prec_b)


class TestReconstruct:
    def test_known_factors_rebuild_reference_matrix(self):
        x = np.array([[1.0, 0.0, 1.0, 5.0],
                      [2.0, -1.0, 1.0, 4.0],
                      [4.0, -1.0, 3.0, 14.0],
                      [3.0, -1.0, 2.0, 9.0]])
        a = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 1.0], [1.0, 1.0]])
        b = np.array([[1.0, 2.0], [0.0, -1.0], [1.0, 1.0], [5.0, 4.0]])
        np.testing.assert_array_equal(reconstruct(FactorState(a, b, 1.0)), x)

    def test_transform_pair_preserves_reconstruction(self):
        rng = np.random.default_rng(23)
        a = rng.standard_normal((5, 2))
        b = rng.standard_normal((4, 2))
        w = rng.standard_normal((2, 2)) + 2 * np.eye(2)
        moved = FactorState(a @ w, np.linalg.solve(w, b.T).T, 1.0)
        np.testing.assert_allclose(reconstruct(moved),
                                   reconstruct(FactorState(a, b, 1.0)), rtol=1e-9)


@settings(max_examples=40, deadline=None)
@given(t=st.floats(-3, 3).filter(lambda v: abs(v) > 1e-3),
       seed=st.integers(0, 2**31 - 1))
def test_zero_mean_prior_penalty_scales_quadratically(t, seed):
    """With zero means the prior penalty is homogeneous of degree 2 in A."""
    rng = np.random.default_rng(seed)
    model = make_model(4, 3, 2, prec_a=rng.uniform(0.5, 3, 2),
                       prec_b=rng.uniform(0.5, 3, 2))
    a = rng.standard_normal((4, 2))
    b = rng.standard_normal((3, 2))
    base = log_prior_a(model, FactorState(np.zeros((4, 2)), b, 1.0))
    at_one = log_prior_a(model, FactorState(a, b, 1.0)) - base
    at_t = log_prior_a(model, FactorState(t * a, b, 1.0)) - base
    assert at_t == pytest.approx(t * t * at_one, rel=1e-12, abs=1e-12)


class TestFactorModelValidation:
    def test_rank_exceeding_min_dimension_rejected(self):
        with pytest.raises(ValueError):
            make_model(2, 3, 3)

    def test_nonpositive_precision_rejected(self):
        with pytest.raises(ValueError):
            make_model(2, 2, 1, prec_a=[0.0])
        with pytest.raises(ValueError):
            make_model(2, 2, 1, prec_b=[-1.0])

    def test_wrong_mean_shape_rejected(self):
        with pytest.raises(ShapeMismatchError):
            make_model(2, 2, 1, mean_a=np.zeros((3, 1)))

    def test_nonpositive_gamma_prior_rejected(self):
        with pytest.raises(ValueError):
            make_model(2, 2, 1, noise_shape=0.0)

    def test_arrays_are_read_only(self):
        model = make_model(2, 2, 1)
        with pytest.raises(ValueError):
            model.mean_a[0, 0] = 1.0


class TestObservationSet:
    def test_entries_sorted_lexicographically(self):
        obs = ObservationSet(3, 3, [(2, 1, 5.0), (0, 2, 1.0), (0, 1, 2.0)])
        assert obs.entries == [(0, 1, 2.0), (0, 2, 1.0), (2, 1, 5.0)]

    def test_duplicate_position_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            ObservationSet(2, 2, [(0, 0, 1.0), (0, 0, 2.0)])

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            ObservationSet(2, 2, [(2, 0, 1.0)])
        with pytest.raises(ValueError):
            ObservationSet(2, 2, [(0, -1, 1.0)])

    def test_row_and_column_groupings(self):
        obs = ObservationSet(3, 4, [(0, 1, 1.0), (0, 3, 2.0), (2, 1, 3.0)])
        cols, vals = obs.row_observations(0)
        np.testing.assert_array_equal(cols, [1, 3])
        np.testing.assert_array_equal(vals, [1.0, 2.0])
        assert obs.row_observations(1)[0].size == 0
        rows, vals = obs.col_observations(1)
        np.testing.assert_array_equal(rows, [0, 2])
        np.testing.assert_array_equal(vals, [1.0, 3.0])

    def test_noninteger_indices_rejected(self):
        with pytest.raises(ValueError):
            ObservationSet(2, 2, [(0.5, 0, 1.0)])


class TestFactorState:
    def test_nonpositive_noise_precision_rejected(self):
        with pytest.raises(ValueError):
            FactorState([[1.0]], [[1.0]], 0.0)

    def test_rank_disagreement_rejected(self):
        with pytest.raises(ShapeMismatchError):
            FactorState(np.zeros((2, 2)), np.zeros((2, 1)), 1.0)

    def test_copy_is_independent(self):
        st1 = FactorState([[1.0]], [[2.0]], 1.0)
        st2 = st1.copy()
        st2.a[0, 0] = 9.0
        assert st1.a[0, 0] == 1.0
