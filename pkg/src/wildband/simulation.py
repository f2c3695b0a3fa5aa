"""Monte Carlo coverage study for the baseline-hazard bands.

Data come from a Cox model with unit baseline hazard, one normal covariate
and censoring at ``min(admin_censor, Exp(1))``. Every repetition draws one
dataset and one multiplier matrix per multiplier kind; all band variants of
that repetition share them.

Random streams are derived from ``DgpConfig.seed`` via spawn keys:
``(0, r, attempt)`` for the data of repetition ``r`` and ``(1, r)`` for its
multipliers (replicate ``b`` uses child ``b`` of that stream).
"""

from __future__ import annotations

import math
import time
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .bands import BandSpec, Transform, Weight, band_from_deviations, band_grid
from .bootstrap import (
    BootConfig, Increments, MultiplierKind, Scheme, _replicate_batch, _resolve_threads, cumulative_deviations,
    multiplier_matrix,
)
from .cox import FitOptions, fit
from .data import SurvivalDataset
from .errors import NumericalError, WildbandError


@dataclass(frozen=True)
class DgpConfig:
    n: int = 100
    beta0: float = 0.3
    cov_sd: float = 4.0
    admin_censor: float = 3.0
    band_interval: tuple = (0.5, 3.0)
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.cov_sd <= 0:
            raise ValueError("cov_sd must be positive")
        object.__setattr__(self, "band_interval", tuple(float(v) for v in self.band_interval))


def true_cumulative_hazard(t):
    return np.asarray(t, dtype=float) * 1.0 if np.ndim(t) else float(t)


def generate_dataset(cfg: DgpConfig, rng: np.random.Generator) -> SurvivalDataset:
    x = rng.normal(0.0, cfg.cov_sd, cfg.n)
    T = rng.standard_exponential(cfg.n) / np.exp(cfg.beta0 * x)
    C = np.minimum(cfg.admin_censor, rng.standard_exponential(cfg.n))
    stop = np.minimum(T, C)
    return SurvivalDataset.from_arrays(stop, (T <= C).astype(int), x[:, None])


def _data_rng(seed, rep, attempt):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(0, rep, attempt))))


def _multiplier_seed(seed, rep):
    return np.random.SeedSequence(seed, spawn_key=(1, rep))


@dataclass(frozen=True)
class Variant:
    """One band column: a resampling configuration plus a band type."""

    boot: BootConfig
    band: BandSpec

    @property
    def key(self):
        b = self.boot
        return (b.multiplier.value, b.scheme.value, b.increments.value, self.band.weight.value,
                self.band.transform.value)

    @property
    def label(self):
        return "/".join(self.key)


def all_variants(multiplier="normal", B=499, interval=(0.5, 3.0), alpha=0.05,
                 schemes=("ee", "direct"), increments=("dn", "dmhat"),
                 weights=("hw", "ep"), transforms=("id", "log")):
    """Cartesian product of variant axes, in table-column order."""
    out = []
    for s in schemes:
        for inc in increments:
            boot = BootConfig(scheme=s, increments=inc, multiplier=multiplier, B=B)
            for w in weights:
                for tr in transforms:
                    out.append(Variant(boot, BandSpec(interval, alpha, w, tr)))
    return out


@dataclass
class CellResult:
    multiplier: str
    scheme: str
    increments: str
    weight: str
    transform: str
    B: int
    alpha: float
    repetitions: int
    covered: int
    coverage: float
    mc_se: float
    mean_width: float
    band_failures: int
    replicate_failure_rate: float
    coverage_by_check: dict = field(default_factory=dict)
    wall_time: float = field(default=0.0, compare=False)


@dataclass
class CoverageResult:
    config: DgpConfig
    R: int
    cells: list
    regenerated: dict
    check: str = "grid"
    wall_time: float = field(default=0.0, compare=False)

    def cell(self, **match):
        found = [c for c in self.cells if all(getattr(c, k) == v for k, v in match.items())]
        if len(found) != 1:
            raise KeyError(f"{len(found)} cells match {match}")
        return found[0]

    def to_dict(self, timing=False):
        cells = []
        for c in self.cells:
            d = asdict(c)
            if not timing:
                d.pop("wall_time")
            cells.append(d)
        out = {"config": asdict(self.config), "R": self.R, "check": self.check,
               "regenerated": dict(self.regenerated), "cells": cells}
        if timing:
            out["wall_time"] = self.wall_time
        return out


def _draw_usable(cfg, rep, fit_options):
    """Data for repetition ``rep``, regenerating on fit failure or no events in the interval."""
    reasons = defaultdict(int)
    t1, t2 = cfg.band_interval
    for attempt in range(1000):
        ds = generate_dataset(cfg, _data_rng(cfg.seed, rep, attempt))
        if not np.any((ds.event_times >= t1) & (ds.event_times <= t2)):
            reasons["no_events_in_interval"] += 1
            continue
        try:
            return ds, fit(ds, fit_options), reasons
        except NumericalError as exc:
            reasons[type(exc).__name__] += 1
    raise RuntimeError(f"repetition {rep}: could not draw a usable dataset")


COVERAGE_CHECKS = ("grid", "events", "interval")


def _covers(band, check):
    truth = true_cumulative_hazard
    if check == "grid":
        return band.contains(truth)
    if check == "events":
        on_event = np.isin(band.grid, band.diagnostics["event_times"])
        vals = truth(band.grid[on_event])
        return bool(np.all((band.lower[on_event] <= vals) & (vals <= band.upper[on_event])))
    return band.covers_interval(truth)


def _one_repetition(cfg, rep, variants, fit_options, multipliers):
    ds, fitted, reasons = _draw_usable(cfg, rep, fit_options)
    t1, t2 = cfg.band_interval
    grid = band_grid(fitted.event_times, (t1, t2))
    estimate = fitted.baseline(grid)
    groups = defaultdict(list)
    for v in variants:
        groups[(v.boot.multiplier, v.boot.B)].append(v)
    outcome = {}
    for (kind, B), vs in groups.items():
        if multipliers is None:
            G = multiplier_matrix(ds.n, kind, _multiplier_seed(cfg.seed, rep), B)
        else:
            G = np.asarray(multipliers(rep, ds.n, B), dtype=float)
        by_resampler = defaultdict(list)
        for v in vs:
            by_resampler[(v.boot.scheme, v.boot.increments, v.boot.fit_options)].append(v)
        for (scheme, inc, opts), members in by_resampler.items():
            t0 = time.perf_counter()
            _, jumps, ok = _replicate_batch(fitted, ds, G, scheme, inc, opts, threads=1)
            dev = cumulative_deviations(ds.event_times, fitted.baseline_jumps, jumps[ok], grid)
            shared = time.perf_counter() - t0
            fail_rate = 1.0 - ok.mean()
            for v in members:
                t0 = time.perf_counter()
                try:
                    band = band_from_deviations(grid, estimate, dev, ds.n, v.band,
                                                {"event_times": ds.event_times})
                    hit = {c: _covers(band, c) for c in COVERAGE_CHECKS}
                    width = float(np.mean(band.width))
                    failed = False
                except (WildbandError, ValueError):
                    hit, width, failed = dict.fromkeys(COVERAGE_CHECKS, False), float("nan"), True
                outcome[v.key] = (hit, width, failed, fail_rate,
                                  shared / len(members) + time.perf_counter() - t0)
    return outcome, reasons


def coverage_experiment(cfg: DgpConfig, variants, R: int, fit_options: FitOptions | None = None,
                        threads=None, progress=None, check="grid", multipliers=None) -> CoverageResult:
    """Simulated simultaneous coverage of ``Lambda_0(t) = t`` on the band interval.

    ``check`` selects where the truth must lie inside the band:

    ``"grid"``
        every band grid point, i.e. the event times in the interval and
        both endpoints (default);
    ``"events"``
        the event times in the interval only;
    ``"interval"``
        every ``t`` in the interval, including left limits at the grid
        points.

    Every cell also reports its coverage under all three checks in
    ``coverage_by_check``. ``multipliers(rep, n, B)`` may replace the random
    multiplier draws.
    Repetitions are independent and may run on several threads; the result
    does not depend on the thread count.
    """
    if R < 1:
        raise ValueError("R must be at least 1")
    if check not in COVERAGE_CHECKS:
        raise ValueError(f"check must be one of {COVERAGE_CHECKS}")
    fit_options = fit_options or FitOptions()
    variants = list(variants)
    keys = [v.key for v in variants]
    if len(set(keys)) != len(keys):
        raise ValueError("duplicate variants")
    start = time.perf_counter()
    work = lambda r: _one_repetition(cfg, r, variants, fit_options, multipliers)  # noqa: E731
    threads = _resolve_threads(threads)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(work, range(R)))
    else:
        results = []
        for r in range(R):
            results.append(work(r))
            if progress is not None:
                progress(r + 1, R)
    regenerated = defaultdict(int)
    for _, reasons in results:
        for k, v in reasons.items():
            regenerated[k] += v
    cells = []
    for v in variants:
        rows = [res[v.key] for res, _ in results]
        by_check = {c: sum(1 for h, *_ in rows if h[c]) / R for c in COVERAGE_CHECKS}
        covered = sum(1 for h, *_ in rows if h[check])
        p = covered / R
        widths = [w for _, w, f, *_ in rows if not f]
        b, bs = v.boot, v.band
        cells.append(CellResult(
            multiplier=b.multiplier.value, scheme=b.scheme.value, increments=b.increments.value,
            weight=bs.weight.value, transform=bs.transform.value, B=b.B, alpha=bs.alpha,
            repetitions=R, covered=covered, coverage=p, mc_se=math.sqrt(p * (1 - p) / R),
            mean_width=float(np.mean(widths)) if widths else float("nan"),
            band_failures=sum(1 for _, _, f, *_ in rows if f),
            replicate_failure_rate=float(np.mean([r[3] for r in rows])),
            coverage_by_check=by_check, wall_time=float(sum(r[4] for r in rows)),
        ))
    return CoverageResult(cfg, R, cells, dict(sorted(regenerated.items())), check,
                          time.perf_counter() - start)


__all__ = [
    "CellResult", "CoverageResult", "DgpConfig", "Increments", "MultiplierKind", "Scheme", "Transform",
    "Variant", "Weight", "all_variants", "coverage_experiment", "generate_dataset", "true_cumulative_hazard",
]
