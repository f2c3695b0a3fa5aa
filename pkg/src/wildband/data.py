"""Counting-process data model and risk-set moments.

A dataset is a list of ``(start, stop]`` rows in Andersen-Gill layout. Row
``r`` is at risk at time ``t`` when ``start_r < t <= stop_r`` and, if its
status is 1, contributes a counting-process jump at ``stop_r``. Several rows
may belong to one subject, which is how piecewise-constant time-dependent
covariates are represented.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyData,
    InvalidInterval,
    OverlappingIntervals,
)


@dataclass(frozen=True)
class SurvivalRow:
    subject_id: object
    start: float
    stop: float
    status: int
    covariates: tuple

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(float(v) for v in np.atleast_1d(self.covariates)))


@dataclass(frozen=True)
class Moments:
    """Risk-set sums ``S_k(t, beta)`` for ``k = 0, 1, 2``."""

    s0: float
    s1: np.ndarray
    s2: np.ndarray

    @property
    def mean(self):
        """Risk-weighted covariate mean ``S1 / S0`` (zero for an empty risk set)."""
        if self.s0 <= 0:
            return np.zeros_like(self.s1)
        return self.s1 / self.s0

    @property
    def variance(self):
        if self.s0 <= 0:
            return np.zeros_like(self.s2)
        e = self.s1 / self.s0
        return self.s2 / self.s0 - np.outer(e, e)


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous step function starting at zero.

    ``value(t)`` is the sum of all jump sizes at jump times ``<= t``.
    """

    jump_times: np.ndarray
    jump_sizes: np.ndarray
    _cumulative: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        times = np.asarray(self.jump_times, dtype=float).reshape(-1)
        sizes = np.asarray(self.jump_sizes, dtype=float).reshape(-1)
        if times.shape != sizes.shape:
            raise DimensionMismatch("jump_times and jump_sizes differ in length")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("jump_times must be strictly increasing")
        object.__setattr__(self, "jump_times", times)
        object.__setattr__(self, "jump_sizes", sizes)
        object.__setattr__(self, "_cumulative", np.concatenate([[0.0], np.cumsum(sizes)]))

    def __call__(self, t):
        idx = np.searchsorted(self.jump_times, t, side="right")
        out = self._cumulative[idx]
        return float(out) if np.ndim(out) == 0 else out

    def values(self):
        """Function values right at each jump time."""
        return self._cumulative[1:].copy()


def eval_step(f: StepFunction, t):
    return f(t)


class SurvivalDataset:
    """Validated, immutable counting-process dataset.

    Use :func:`validate_dataset` for a list of :class:`SurvivalRow` objects
    or :meth:`from_arrays` for column data. Besides the raw columns, the
    dataset caches the distinct event times on ``(0, tau]``, the row-by-event
    at-risk matrix and the row-by-event counting-process increments that all
    estimators work with.
    """

    def __init__(self, ids, start, stop, status, covariates, tau=None, covariate_names=None):
        start = np.asarray(start, dtype=float).reshape(-1)
        stop = np.asarray(stop, dtype=float).reshape(-1)
        status = np.asarray(status).reshape(-1)
        X = np.asarray(covariates, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        nrows = stop.size
        if nrows == 0:
            raise EmptyData("dataset has no rows")
        if not (start.size == nrows == status.size == X.shape[0] == len(ids)):
            raise DimensionMismatch("columns have different lengths")
        if X.shape[1] < 1:
            raise DimensionMismatch("at least one covariate is required")
        if not np.all(np.isfinite(start)) or not np.all(np.isfinite(stop)) or not np.all(np.isfinite(X)):
            raise InvalidInterval("non-finite time or covariate value")
        if np.any(start < 0):
            raise InvalidInterval("start times must be >= 0")
        bad = np.flatnonzero(stop <= start)
        if bad.size:
            raise InvalidInterval(f"row {bad[0]}: stop ({stop[bad[0]]}) must exceed start ({start[bad[0]]})")
        if not np.all(np.isin(status, (0, 1))):
            raise InvalidInterval("status must be 0 or 1")
        status = status.astype(np.int64)

        ids = np.asarray(ids, dtype=object)
        uniq, subject = np.unique(ids.astype(str), return_inverse=True)
        order = np.lexsort((start, subject))
        same = subject[order][1:] == subject[order][:-1]
        overlap = same & (start[order][1:] < stop[order][:-1])
        if np.any(overlap):
            j = order[1:][overlap][0]
            raise OverlappingIntervals(f"subject {ids[j]!r} has overlapping (start, stop] intervals")

        if tau is None:
            tau = float(stop.max())
        tau = float(tau)
        if tau <= 0:
            raise InvalidInterval("tau must be positive")

        self.ids = ids
        self.subject = subject.astype(np.int64)
        self.n = int(uniq.size)
        self.start = start
        self.stop = stop
        self.status = status
        self.X = X
        self.p = int(X.shape[1])
        self.tau = tau
        if covariate_names is None:
            covariate_names = [f"x{j + 1}" for j in range(self.p)]
        covariate_names = tuple(str(c) for c in covariate_names)
        if len(covariate_names) != self.p:
            raise DimensionMismatch(f"{len(covariate_names)} covariate names for {self.p} covariates")
        self.covariate_names = covariate_names

        is_event = (status == 1) & (stop <= tau)
        self.event_times = np.unique(stop[is_event])
        K = self.event_times.size
        self.event_rows = np.flatnonzero(is_event)
        self.event_index = np.searchsorted(self.event_times, stop[self.event_rows])
        self.n_events = np.bincount(self.event_index, minlength=K).astype(float)
        self.at_risk = ((start[:, None] < self.event_times[None, :])
                        & (self.event_times[None, :] <= stop[:, None])).astype(float)
        dN = np.zeros((nrows, K))
        dN[self.event_rows, self.event_index] = 1.0
        self.dN = dN
        for arr in (self.start, self.stop, self.status, self.X, self.at_risk, self.dN,
                    self.subject, self.event_times, self.event_rows, self.event_index, self.n_events):
            arr.setflags(write=False)

    @classmethod
    def from_arrays(cls, stop, status, covariates, start=None, ids=None, tau=None, covariate_names=None):
        stop = np.asarray(stop, dtype=float).reshape(-1)
        if start is None:
            start = np.zeros_like(stop)
        if ids is None:
            ids = [str(i) for i in range(stop.size)]
        return cls(ids, start, stop, status, covariates, tau=tau, covariate_names=covariate_names)

    @property
    def n_rows(self):
        return self.stop.size

    @property
    def rows(self):
        return [SurvivalRow(self.ids[r], self.start[r], self.stop[r], int(self.status[r]), tuple(self.X[r]))
                for r in range(self.n_rows)]

    def with_covariates(self, covariates):
        """Copy of the dataset with the covariate matrix replaced."""
        covariates = np.asarray(covariates, dtype=float)
        names = self.covariate_names if covariates.ndim == 2 and covariates.shape[1] == self.p else None
        return SurvivalDataset(self.ids, self.start, self.stop, self.status, covariates, tau=self.tau,
                               covariate_names=names)

    def __repr__(self):
        return (f"SurvivalDataset(n={self.n}, rows={self.n_rows}, p={self.p}, "
                f"events={int(self.n_events.sum())}, tau={self.tau:g})")


def validate_dataset(rows: Sequence[SurvivalRow], tau=None) -> SurvivalDataset:
    if len(rows) == 0:
        raise EmptyData("no rows supplied")
    dims = {len(r.covariates) for r in rows}
    if len(dims) != 1:
        raise DimensionMismatch(f"ragged covariate vectors (dimensions {sorted(dims)})")
    return SurvivalDataset(
        [r.subject_id for r in rows],
        [r.start for r in rows],
        [r.stop for r in rows],
        [r.status for r in rows],
        np.array([r.covariates for r in rows], dtype=float),
        tau=tau,
    )


def _check_beta(ds, beta):
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.size != ds.p:
        raise DimensionMismatch(f"beta has length {beta.size}, expected {ds.p}")
    return beta


def s_moments(ds: SurvivalDataset, beta, t) -> Moments:
    """Exact risk-set sums at a single time ``t``."""
    beta = _check_beta(ds, beta)
    mask = (ds.start < t) & (t <= ds.stop)
    X = ds.X[mask]
    w = np.exp(X @ beta)
    return Moments(float(w.sum()), X.T @ w, (X * w[:, None]).T @ X)


def risk_moments(ds: SurvivalDataset, beta):
    """``S0, S1, S2`` at every distinct event time.

    Returns arrays of shape ``(K,)``, ``(K, p)`` and ``(K, p, p)``.
    """
    beta = _check_beta(ds, beta)
    w = np.exp(ds.X @ beta)
    Yw = ds.at_risk * w[:, None]
    s0 = Yw.sum(axis=0)
    s1 = Yw.T @ ds.X
    s2 = np.einsum("rk,rp,rq->kpq", Yw, ds.X, ds.X)
    return s0, s1, s2
