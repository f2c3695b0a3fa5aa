import math

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from wildband.simulation import (
    CoverageResult, DgpConfig, all_variants, coverage_experiment, generate_dataset, true_cumulative_hazard,
)


class TestDgp:
    def test_event_fraction_null_effect(self):
        cfg = DgpConfig(n=20_000, beta0=0.0)
        ds = generate_dataset(cfg, np.random.default_rng(1))
        p = (1 - math.exp(-6)) / 2
        se = math.sqrt(p * (1 - p) / cfg.n)
        assert abs(ds.status.mean() - p) <= 3 * se

    def test_administrative_censoring(self):
        ds = generate_dataset(DgpConfig(n=2000), np.random.default_rng(2))
        assert ds.stop.max() <= 3.0
        assert np.all(ds.start == 0)
        assert ds.p == 1

    def test_deterministic(self):
        a = generate_dataset(DgpConfig(n=50), np.random.default_rng(3))
        b = generate_dataset(DgpConfig(n=50), np.random.default_rng(3))
        assert_array_equal(a.stop, b.stop)
        assert_array_equal(a.X, b.X)

    def test_truth(self):
        assert true_cumulative_hazard(0.0) == 0.0
        assert true_cumulative_hazard(3.0) == 3.0
        assert true_cumulative_hazard(0.5) == 0.5

    def test_config_validation(self):
        with pytest.raises(ValueError):
            DgpConfig(n=1)
        with pytest.raises(ValueError):
            DgpConfig(cov_sd=0.0)


class TestCoverage:
    def test_zero_multipliers_never_cover(self):
        variants = all_variants(B=20, schemes=("ee",), increments=("dn",), weights=("hw",), transforms=("id",))
        res = coverage_experiment(DgpConfig(n=100, seed=1), variants, R=1,
                                  multipliers=lambda rep, n, B: np.zeros((B, n)))
        assert res.cells[0].coverage == 0.0
        assert res.cells[0].mean_width == 0.0

    def test_cells_and_standard_errors(self):
        variants = all_variants(B=49)
        res = coverage_experiment(DgpConfig(n=60, seed=2), variants, R=6)
        assert isinstance(res, CoverageResult)
        assert len(res.cells) == 16
        for c in res.cells:
            assert 0 <= c.coverage <= 1
            assert c.mc_se == pytest.approx(math.sqrt(c.coverage * (1 - c.coverage) / 6))
            assert c.covered == round(c.coverage * 6)
        assert res.cell(scheme="ee", increments="dn", weight="hw", transform="log").repetitions == 6

    def test_thread_invariance(self):
        variants = all_variants(B=49, multiplier="poisson")
        cfg = DgpConfig(n=60, seed=3)
        a = coverage_experiment(cfg, variants, R=5, threads=1)
        b = coverage_experiment(cfg, variants, R=5, threads=3)
        assert a.to_dict() == b.to_dict()

    def test_checks_are_ordered(self):
        # the continuous check is the strictest and event times only the loosest
        variants = all_variants(B=99)
        cfg = DgpConfig(n=80, seed=4)
        cov = {c: [x.covered for x in coverage_experiment(cfg, variants, R=15, check=c).cells]
               for c in ("events", "grid", "interval")}
        assert all(e >= g >= i for e, g, i in zip(cov["events"], cov["grid"], cov["interval"]))

    def test_width_decreases_with_n(self):
        # equal-precision identity bands; the other types are dominated by the
        # few grid points near the end of follow-up where the risk set is tiny
        variants = all_variants(B=99, schemes=("ee",), increments=("dn",), weights=("ep",), transforms=("id",))
        widths = [coverage_experiment(DgpConfig(n=n, seed=5), variants, R=40).cells[0].mean_width
                  for n in (100, 200, 400)]
        assert widths[0] > widths[1] > widths[2]

    def test_regeneration_counted(self):
        # small samples often have no event late in follow-up, or separate
        variants = all_variants(B=20, schemes=("direct",), increments=("dn",), weights=("hw",), transforms=("id",))
        res = coverage_experiment(DgpConfig(n=8, seed=6, band_interval=(1.0, 3.0)), variants, R=10)
        assert res.regenerated == {"MonotoneLikelihood": 2, "no_events_in_interval": 33}

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            coverage_experiment(DgpConfig(), all_variants(B=20), R=0)
        with pytest.raises(ValueError):
            coverage_experiment(DgpConfig(), all_variants(B=20), R=1, check="everywhere")
        with pytest.raises(ValueError):
            coverage_experiment(DgpConfig(), all_variants(B=20) * 2, R=1)
