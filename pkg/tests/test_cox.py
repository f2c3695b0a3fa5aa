import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from wildband import (
    EmptyRiskSetAtEvent, FitOptions, MonotoneLikelihood, NoConvergence, SurvivalDataset, breslow, fit,
    information, log_partial_likelihood, residual_increments, score,
)

from .conftest import make_dataset

BETA_HAT = -0.5 * math.log(2.0)


def fd_gradient(f, beta, h=1e-5):
    out = []
    for j in range(beta.size):
        e = np.zeros_like(beta)
        e[j] = h
        out.append((f(beta + e) - f(beta - e)) / (2 * h))
    return np.array(out)


class TestPartialLikelihood:
    def test_three_subjects_at_zero(self, three):
        assert_allclose(log_partial_likelihood(three, [0.0]), -math.log(6), rtol=1e-15)

    def test_zero_covariates_constant(self):
        ds = SurvivalDataset.from_arrays([1, 2, 3], [1, 1, 0], [0.0, 0.0, 0.0])
        for b in (-3.0, 0.0, 2.5):
            assert_allclose(log_partial_likelihood(ds, [b]), -math.log(3) - math.log(2), rtol=1e-15)

    def test_single_subject(self):
        ds = SurvivalDataset.from_arrays([2.0], [1], [[0.7, -1.0]])
        assert log_partial_likelihood(ds, [1.3, 0.4]) == 0.0

    def test_score_example(self, three):
        assert_allclose(score(three, [0.0]), [-1 / 6], rtol=1e-14)

    def test_score_zero_covariates(self):
        ds = SurvivalDataset.from_arrays([1, 2, 3], [1, 1, 1], np.zeros((3, 2)))
        assert_array_equal(score(ds, [0.4, -2.0]), [0.0, 0.0])

    def test_information_example(self, three):
        assert_allclose(information(three, [0.0]), [[17 / 36]], rtol=1e-14)

    def test_information_equal_covariates(self):
        ds = SurvivalDataset.from_arrays([1, 2, 3], [1, 1, 1], np.full((3, 1), 2.5))
        assert_allclose(information(ds, [0.7]), [[0.0]], atol=1e-15)

    def test_empty_risk_set_error(self):
        # validated data always keep an event row in its own risk set, so use a
        # stand-in whose at-risk matrix is empty
        from types import SimpleNamespace

        from wildband.cox import _pl_terms
        ds = SurvivalDataset.from_arrays([1.0, 2.0], [1, 1], [0.0, 1.0])
        hollow = SimpleNamespace(**{k: getattr(ds, k) for k in ("X", "event_times", "n_events", "event_rows",
                                                                 "event_index", "p")},
                                 at_risk=np.zeros_like(ds.at_risk))
        with pytest.raises(EmptyRiskSetAtEvent):
            _pl_terms(hollow, np.zeros(1))


class TestDerivatives:
    @pytest.mark.parametrize("seed", range(10))
    def test_score_is_gradient(self, seed):
        r = np.random.default_rng(seed)
        p = 1 + seed % 3
        ds = make_dataset(r, n=int(r.integers(5, 31)), p=p, truncation=seed % 2 == 0, ties=seed % 3 == 0)
        beta = r.normal(size=p) * 0.5
        U = score(ds, beta)
        fd = fd_gradient(lambda b: log_partial_likelihood(ds, b), beta)
        assert np.max(np.abs(U - fd)) <= 1e-6 * max(np.max(np.abs(U)), 1e-3)

    @pytest.mark.parametrize("seed", range(10))
    def test_information_is_negative_jacobian(self, seed):
        r = np.random.default_rng(100 + seed)
        p = 1 + seed % 3
        ds = make_dataset(r, n=int(r.integers(5, 31)), p=p, truncation=seed % 2 == 1)
        beta = r.normal(size=p) * 0.5
        I = information(ds, beta)
        J = np.column_stack([fd_gradient(lambda b: score(ds, b)[j], beta) for j in range(p)]).T
        assert np.max(np.abs(I + J)) <= 1e-6 * max(np.max(np.abs(I)), 1e-3)
        assert_allclose(I, I.T, atol=1e-14)
        assert np.linalg.eigvalsh(I).min() >= -1e-12


class TestFit:
    def test_closed_form(self, three_fit):
        assert three_fit.converged
        assert_allclose(three_fit.beta_hat, [BETA_HAT], rtol=1e-12)
        assert np.max(np.abs(three_fit.score)) <= FitOptions().score_tol

    def test_grid_search(self, three):
        grid = np.arange(-2.0, 2.0 + 1e-12, 1e-5)
        e = np.exp(grid)
        # vectorised log partial likelihood for the fixture
        lpl = grid - np.log(2 * e + 1) - np.log(e + 1)
        assert_allclose(lpl[::40000], [log_partial_likelihood(three, [b]) for b in grid[::40000]], rtol=1e-13)
        assert abs(grid[np.argmax(lpl)] - fit(three).beta_hat[0]) <= 1e-4

    def test_separation(self):
        ds = SurvivalDataset.from_arrays([1.0, 2.0], [1, 1], [1.0, 0.0])
        with pytest.raises(MonotoneLikelihood):
            fit(ds)

    def test_no_events(self):
        ds = SurvivalDataset.from_arrays([1.0, 2.0], [0, 0], [1.0, 0.0])
        with pytest.raises(NoConvergence):
            fit(ds)

    def test_iteration_limit(self, rng):
        ds = make_dataset(rng, n=30, p=2)
        with pytest.raises(NoConvergence):
            fit(ds, FitOptions(max_iter=1, score_tol=1e-14, step_tol=1e-14))

    def test_options_validated(self):
        with pytest.raises(ValueError):
            FitOptions(score_tol=0.0)
        with pytest.raises(ValueError):
            FitOptions(max_iter=0)

    def test_deterministic(self, rng):
        ds = make_dataset(rng, n=30, p=2)
        a, b = fit(ds), fit(ds)
        assert_array_equal(a.beta_hat, b.beta_hat)
        assert_array_equal(a.baseline.jump_sizes, b.baseline.jump_sizes)

    def test_row_order_and_relabeling(self, rng):
        ds = make_dataset(rng, n=25, p=2, truncation=True, ties=True)
        perm = rng.permutation(ds.n_rows)
        other = SurvivalDataset([f"s{i}" for i in perm], ds.start[perm], ds.stop[perm], ds.status[perm], ds.X[perm])
        a, b = fit(ds), fit(other)
        assert_allclose(a.beta_hat, b.beta_hat, rtol=1e-10)
        assert_allclose(a.baseline.jump_sizes, b.baseline.jump_sizes, rtol=1e-10)

    def test_centering_invariance(self, rng):
        ds = make_dataset(rng, n=30, p=2)
        c = np.array([0.75, -1.5])
        a, b = fit(ds), fit(ds.with_covariates(ds.X - c))
        assert_allclose(b.beta_hat, a.beta_hat, rtol=1e-9, atol=1e-12)
        assert_allclose(b.baseline.jump_sizes, a.baseline.jump_sizes * np.exp(c @ a.beta_hat), rtol=1e-9)

    def test_information_psd_at_fit(self, rng):
        f = fit(make_dataset(rng, n=30, p=3))
        assert_allclose(f.information, f.information.T, atol=1e-14)
        assert np.linalg.eigvalsh(f.information).min() > 0
        assert f.standard_errors().shape == (3,)

    def test_multi_row_subjects(self):
        # piecewise-constant covariate: subject "a" switches x from 0 to 1 at t = 1.5
        ds = SurvivalDataset(["a", "a", "b", "c"], [0, 1.5, 0, 0], [1.5, 4, 2, 3], [0, 1, 1, 1],
                             [[0.0], [1.0], [1.0], [0.0]])
        f = fit(ds)
        assert ds.n == 3
        assert f.residual_increments.shape == (3, 3)
        assert_allclose(f.residual_increments.sum(axis=0), 0, atol=1e-12)


class TestBreslow:
    def test_nelson_aalen(self):
        ds = SurvivalDataset.from_arrays([1, 2, 3], [1, 1, 1], [0.0, 0.0, 0.0])
        for b in (0.0, 1.7):
            assert_allclose(breslow(ds, [b])([1, 2, 3]), [1 / 3, 5 / 6, 11 / 6], rtol=1e-15)

    def test_fixture_values(self, three):
        lam = breslow(three, [BETA_HAT])
        assert_allclose(lam([1, 2, 3]), [math.sqrt(2) - 1, 1.0, 1 + math.sqrt(2)], rtol=1e-14)

    def test_fitted_baseline(self, three_fit):
        assert_allclose(three_fit.baseline([1, 2, 3]), [math.sqrt(2) - 1, 1.0, 1 + math.sqrt(2)], rtol=1e-12)

    def test_left_truncated_before_entry(self):
        ds = SurvivalDataset.from_arrays([3, 4], [1, 1], [0.0, 1.0], start=[2, 2])
        assert breslow(ds, [0.3])(1.0) == 0.0

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_nelson_aalen_random(self, seed):
        r = np.random.default_rng(seed)
        ds = make_dataset(r, n=15, truncation=True, ties=True)
        ds0 = ds.with_covariates(np.zeros((ds.n_rows, 1)))
        lam = breslow(ds0, [r.normal()])
        na = np.cumsum(ds.n_events / ds.at_risk.sum(axis=0))
        assert_allclose(lam.values(), na, rtol=1e-13)
        assert np.all(lam.jump_sizes >= 0)


class TestResiduals:
    def test_single_subject(self):
        from wildband.cox import _row_residuals
        ds = SurvivalDataset.from_arrays([1.0], [1], [0.5])
        jumps = breslow(ds, [0.8]).jump_sizes
        assert_allclose(_row_residuals(ds, np.array([0.8]), jumps), [[0.0]], atol=1e-15)

    def test_zero_covariates(self):
        from wildband.cox import _row_residuals
        ds = SurvivalDataset.from_arrays([1, 2, 3], [1, 1, 1], [0.0, 0.0, 0.0])
        dM = _row_residuals(ds, np.zeros(1), breslow(ds, [0.0]).jump_sizes)
        assert_allclose(dM[:, 0], [2 / 3, -1 / 3, -1 / 3], rtol=1e-15)

    def test_columns_sum_to_zero(self, rng):
        ds = make_dataset(rng, n=30, p=2, truncation=True, ties=True)
        f = fit(ds)
        dM = residual_increments(ds, f)
        assert dM.shape == (ds.n, ds.event_times.size)
        assert np.max(np.abs(dM.sum(axis=0))) <= 1e-12
