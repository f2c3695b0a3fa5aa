import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from wildband import (
    DimensionMismatch, EmptyData, InvalidInterval, OverlappingIntervals, StepFunction, SurvivalDataset,
    SurvivalRow, eval_step, s_moments, validate_dataset,
)
from wildband.data import risk_moments

from .conftest import make_dataset


def rows3():
    return [SurvivalRow(str(i), 0.0, s, 1, (x,)) for i, (s, x) in enumerate([(1, 1), (2, 0), (3, 1)])]


class TestValidation:
    def test_well_formed(self):
        ds = validate_dataset(rows3())
        assert ds.p == 1
        assert ds.n == 3
        assert_array_equal(ds.event_times, [1, 2, 3])
        assert ds.tau == 3

    def test_degenerate_interval(self):
        with pytest.raises(InvalidInterval):
            validate_dataset([SurvivalRow("a", 1.0, 1.0, 1, (0.0,))])

    def test_overlap(self):
        rows = [SurvivalRow("A", 0, 2, 0, (0.0,)), SurvivalRow("A", 1, 3, 1, (0.0,))]
        with pytest.raises(OverlappingIntervals):
            validate_dataset(rows)

    def test_adjacent_rows_allowed(self):
        rows = [SurvivalRow("A", 0, 2, 0, (0.0,)), SurvivalRow("A", 2, 3, 1, (1.0,))]
        ds = validate_dataset(rows)
        assert ds.n == 1
        assert ds.n_rows == 2

    def test_empty(self):
        with pytest.raises(EmptyData):
            validate_dataset([])

    def test_ragged(self):
        rows = [SurvivalRow("a", 0, 1, 1, (0.0,)), SurvivalRow("b", 0, 2, 1, (0.0, 1.0))]
        with pytest.raises(DimensionMismatch):
            validate_dataset(rows)

    def test_negative_start_and_bad_status(self):
        with pytest.raises(InvalidInterval):
            SurvivalDataset.from_arrays([1.0], [1], [0.0], start=[-1.0])
        with pytest.raises(InvalidInterval):
            SurvivalDataset.from_arrays([1.0], [2], [0.0])

    def test_tied_events(self):
        ds = SurvivalDataset.from_arrays([1, 1, 2], [1, 1, 0], [0.0, 1.0, 2.0])
        assert_array_equal(ds.event_times, [1])
        assert_array_equal(ds.n_events, [2])

    def test_tau_restricts_events(self):
        ds = SurvivalDataset.from_arrays([1, 2, 3], [1, 1, 1], [0.0, 1.0, 2.0], tau=2.5)
        assert_array_equal(ds.event_times, [1, 2])

    def test_immutable(self):
        ds = validate_dataset(rows3())
        with pytest.raises(ValueError):
            ds.X[0, 0] = 5.0

    def test_rows_round_trip(self):
        ds = validate_dataset(rows3())
        again = validate_dataset(ds.rows)
        assert_array_equal(again.X, ds.X)
        assert_array_equal(again.stop, ds.stop)


class TestMoments:
    def test_all_at_risk(self):
        m = s_moments(validate_dataset(rows3()), [0.0], 1.0)
        assert m.s0 == 3
        assert_allclose(m.s1, [2])
        assert_allclose(m.s2, [[2]])

    def test_single_at_risk(self):
        m = s_moments(validate_dataset(rows3()), [0.0], 2.5)
        assert m.s0 == 1
        assert_allclose(m.s1, [1])
        assert_allclose(m.s2, [[1]])

    def test_empty_risk_set(self):
        m = s_moments(validate_dataset(rows3()), [0.3], 4.0)
        assert m.s0 == 0
        assert_array_equal(m.s1, [0])
        assert_array_equal(m.s2, [[0]])
        assert_array_equal(m.variance, [[0]])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            s_moments(validate_dataset(rows3()), [0.0, 1.0], 1.0)

    def test_entry_time_not_at_risk(self):
        ds = SurvivalDataset.from_arrays([3.0], [1], [1.0], start=[2.0])
        assert s_moments(ds, [0.0], 2.0).s0 == 0
        assert s_moments(ds, [0.0], 2.5).s0 == 1

    def test_batched_matches_pointwise(self, rng):
        ds = make_dataset(rng, n=25, p=3, truncation=True, ties=True)
        beta = rng.normal(size=3) * 0.5
        s0, s1, s2 = risk_moments(ds, beta)
        for k, t in enumerate(ds.event_times):
            m = s_moments(ds, beta, t)
            assert_allclose(s0[k], m.s0, rtol=1e-13)
            assert_allclose(s1[k], m.s1, rtol=1e-13, atol=1e-13)
            assert_allclose(s2[k], m.s2, rtol=1e-13, atol=1e-13)

    def test_zero_beta_loop_oracle(self, rng):
        ds = make_dataset(rng, n=15, p=2, truncation=True)
        t = float(np.median(ds.stop))
        s0, s1, s2 = 0.0, np.zeros(2), np.zeros((2, 2))
        for r in range(ds.n_rows):
            if ds.start[r] < t <= ds.stop[r]:
                x = ds.X[r]
                s0 += 1
                s1 += x
                s2 += np.outer(x, x)
        m = s_moments(ds, [0.0, 0.0], t)
        assert m.s0 == s0
        assert_allclose(m.s1, s1, rtol=1e-14)
        assert_allclose(m.s2, s2, rtol=1e-14)

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), p=st.integers(1, 3),
           scale=st.floats(0.0, 3.0), t=st.floats(0.01, 2.0))
    def test_variance_psd(self, seed, p, scale, t):
        r = np.random.default_rng(seed)
        ds = make_dataset(r, n=12, p=p, truncation=True)
        m = s_moments(ds, r.normal(size=p) * scale, t)
        if m.s0 > 0:
            V = m.variance
            assert_allclose(V, V.T, atol=1e-12)
            assert np.linalg.eigvalsh(V).min() >= -1e-10 * max(1.0, np.abs(V).max())

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_risk_set_non_increasing(self, seed):
        ds = make_dataset(np.random.default_rng(seed), n=15)
        sizes = ds.at_risk.sum(axis=0)
        assert np.all(np.diff(sizes) <= 0)


class TestStepFunction:
    f = StepFunction([1.0, 2.0], [0.5, 0.25])

    def test_between_jumps(self):
        assert eval_step(self.f, 1.5) == 0.5

    def test_right_continuous(self):
        assert eval_step(self.f, 2.0) == 0.75

    def test_before_first_jump(self):
        assert eval_step(self.f, 0.9) == 0.0

    def test_vectorised(self):
        assert_array_equal(self.f(np.array([0.0, 1.0, 3.0])), [0.0, 0.5, 0.75])

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            StepFunction([2.0, 1.0], [1.0, 1.0])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0, 5), min_size=1, max_size=10),
           st.lists(st.floats(0, 10), min_size=2, max_size=20))
    def test_monotone_for_positive_jumps(self, sizes, ts):
        f = StepFunction(np.arange(1, len(sizes) + 1, dtype=float), sizes)
        v = f(np.sort(ts))
        assert np.all(np.diff(v) >= 0)
