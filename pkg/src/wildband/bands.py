"""Simultaneous confidence bands and restricted-mean intervals.

Bands have the form ``phi^{-1}[phi(Lambda_hat(t)) -/+ c / g(t)]`` on a
time interval ``[t1, t2]``, with ``phi`` the identity or the log, and the
weight ``g`` of equal-precision (``sqrt(n) / sigma``) or Hall-Wellner
(``sqrt(n) / (1 + sigma^2)``) type. ``sigma^2(t)`` is the empirical variance
of ``sqrt(n) (Lambda*(t) - Lambda_hat(t))`` over the bootstrap replicates,
and the critical value ``c`` is an order statistic of the replicate sup
statistics ``sup_t g(t) |Lambda*(t) - Lambda_hat(t)|``. The log band reuses
the identity-scale critical value.

Both ``Lambda_hat`` and the replicates are constant between event times, so
evaluating on the event times inside the interval plus its endpoints gives
the exact supremum.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .bootstrap import ReplicateSet, empirical_variance, grid_index
from .cox import FittedCox
from .data import StepFunction
from .errors import DimensionMismatch, TooFewReplicates, ZeroEstimateOnGrid, ZeroVarianceOnGrid


class Weight(str, enum.Enum):
    EQUAL_PRECISION = "ep"
    HALL_WELLNER = "hw"


class Transform(str, enum.Enum):
    IDENTITY = "id"
    LOG = "log"


@dataclass(frozen=True)
class BandSpec:
    interval: tuple
    alpha: float = 0.05
    weight: Weight = Weight.HALL_WELLNER
    transform: Transform = Transform.LOG

    def __post_init__(self):
        t1, t2 = (float(v) for v in self.interval)
        if not t1 < t2:
            raise ValueError(f"interval must satisfy t1 < t2, got ({t1}, {t2})")
        if t1 < 0:
            raise ValueError("interval must lie in [0, tau]")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        object.__setattr__(self, "interval", (t1, t2))
        object.__setattr__(self, "weight", Weight(self.weight))
        object.__setattr__(self, "transform", Transform(self.transform))

    @property
    def label(self):
        return f"{self.weight.value}-{self.transform.value}"


@dataclass(frozen=True)
class ConfidenceBand:
    grid: np.ndarray
    estimate: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    c_star: float
    spec: BandSpec
    pointwise_lower: np.ndarray | None = None
    pointwise_upper: np.ndarray | None = None
    scale: str = "cumulative_hazard"
    covariates: tuple | None = None
    diagnostics: dict = field(default_factory=dict)

    def contains(self, func):
        """True when ``func`` lies inside the band at every grid point."""
        values = func(self.grid)
        return bool(np.all((self.lower <= values) & (values <= self.upper)))

    def covers_interval(self, cumhaz):
        """True when a continuous non-decreasing ``cumhaz`` stays in the band on all of the interval.

        Between grid points the band is constant, so the check uses the
        function at each grid point and its left limit at the next one.
        """
        vals = cumhaz(self.grid)
        ok = np.all((self.lower <= vals) & (vals <= self.upper))
        return bool(ok and np.all(vals[1:] <= self.upper[:-1]))

    @property
    def width(self):
        return self.upper - self.lower


def band_grid(event_times, interval):
    t1, t2 = interval
    inside = event_times[(event_times >= t1) & (event_times <= t2)]
    return np.union1d(inside, [t1, t2])


def weight_values(spec: BandSpec, sigma2, lambda_hat, n):
    """Band weights on the grid; the log transform gets the ``Lambda_hat``-scaled versions."""
    sigma2 = np.asarray(sigma2, dtype=float)
    root_n = math.sqrt(n)
    if spec.weight is Weight.EQUAL_PRECISION:
        if np.any(sigma2 <= 0):
            t = int(np.flatnonzero(sigma2 <= 0)[0])
            raise ZeroVarianceOnGrid(f"bootstrap variance is zero at grid point {t}; "
                                     "equal-precision weights are undefined")
        g = root_n / np.sqrt(sigma2)
    else:
        g = root_n / (1.0 + sigma2)
    if spec.transform is Transform.LOG:
        lam = np.asarray(lambda_hat, dtype=float)
        if np.any(lam <= 0):
            raise ZeroEstimateOnGrid("estimate is zero on the grid; log-transformed band is undefined")
        g = g * lam
    return g


def sup_statistic(deviation, weights):
    """``max_t weights(t) * |deviation(t)|``, per row for a 2-d ``deviation``."""
    return np.max(np.asarray(weights) * np.abs(deviation), axis=-1)


def order_statistic_rank(B, alpha):
    """1-based rank ``ceil((B + 1)(1 - alpha))`` used for all bootstrap quantiles."""
    if B < math.ceil(1.0 / alpha - 1e-9):
        raise TooFewReplicates(f"{B} replicates are too few for alpha={alpha}; need at least {math.ceil(1 / alpha - 1e-9)}")
    return min(B, math.ceil((B + 1) * (1.0 - alpha) - 1e-9))


def critical_value(sups, alpha):
    sups = np.sort(np.asarray(sups, dtype=float).reshape(-1))
    return float(sups[order_statistic_rank(sups.size, alpha) - 1])


def _pointwise_quantiles(scaled_abs_dev, alpha):
    B = scaled_abs_dev.shape[0]
    return np.sort(scaled_abs_dev, axis=0)[order_statistic_rank(B, alpha) - 1]


def band_from_deviations(grid, estimate, deviations, n, spec: BandSpec, diagnostics=None):
    """Band for a cumulative-hazard-type curve from replicate deviations.

    ``deviations`` has shape ``(B, len(grid))`` and holds
    ``Lambda*(t) - Lambda_hat(t)`` for converged replicates.
    """
    if deviations.shape[0] <= 1:
        raise TooFewReplicates("at least two converged replicates are needed for a variance estimate")
    sigma2 = empirical_variance(math.sqrt(n) * deviations)
    g = weight_values(replace(spec, transform=Transform.IDENTITY), sigma2, estimate, n)
    c_star = critical_value(sup_statistic(deviations, g), spec.alpha)
    q = _pointwise_quantiles(g * np.abs(deviations), spec.alpha)
    diag = dict(diagnostics or {})
    if spec.transform is Transform.IDENTITY:
        half, pw_half = c_star / g, q / g
        raw_lower = estimate - half
        lower = np.maximum(raw_lower, 0.0)
        upper = estimate + half
        pw_lower = np.maximum(estimate - pw_half, 0.0)
        pw_upper = estimate + pw_half
        diag["clipped_points"] = int((raw_lower < 0).sum())
    else:
        g_log = weight_values(spec, sigma2, estimate, n)
        # tiny tilde weights can overflow exp; an infinite upper limit is the honest answer
        with np.errstate(over="ignore"):
            lower = estimate * np.exp(-c_star / g_log)
            upper = estimate * np.exp(c_star / g_log)
            pw_lower = estimate * np.exp(-q / g_log)
            pw_upper = estimate * np.exp(q / g_log)
        diag["clipped_points"] = 0
    diag["replicates_used"] = int(deviations.shape[0])
    return ConfidenceBand(grid, estimate, lower, upper, c_star, spec, pw_lower, pw_upper, diagnostics=diag)


def _diagnostics(reps):
    return {"replicates": reps.B, "failed_replicates": reps.n_failed, "warnings": list(reps.warnings)}


def _check_interval(fitted, spec):
    t1, t2 = spec.interval
    inside = fitted.event_times[(fitted.event_times >= t1) & (fitted.event_times <= t2)]
    if inside.size == 0:
        raise ValueError(f"no event times inside the band interval [{t1:g}, {t2:g}]")


def build_band(fitted: FittedCox, reps: ReplicateSet, spec: BandSpec) -> ConfidenceBand:
    """Simultaneous band for the cumulative baseline hazard."""
    _check_interval(fitted, spec)
    grid = band_grid(fitted.event_times, spec.interval)
    estimate = fitted.baseline(grid)
    return band_from_deviations(grid, estimate, reps.deviations(grid), reps.n, spec, _diagnostics(reps))


def survival_band(fitted: FittedCox, reps: ReplicateSet, x, spec: BandSpec) -> ConfidenceBand:
    """Band for ``S(t | x) = exp(-Lambda_0(t) exp(x'beta))``.

    The band is built for the covariate-specific cumulative hazard and then
    mapped through ``exp(-.)``, which swaps the roles of the limits.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != fitted.p:
        raise DimensionMismatch(f"covariate profile has length {x.size}, expected {fitted.p}")
    _check_interval(fitted, spec)
    grid = band_grid(fitted.event_times, spec.interval)
    cumhaz = fitted.baseline(grid) * np.exp(x @ fitted.beta_hat)
    hb = band_from_deviations(grid, cumhaz, reps.deviations(grid, x), reps.n, spec, _diagnostics(reps))
    return ConfidenceBand(
        grid, np.exp(-cumhaz), np.exp(-hb.upper), np.exp(-hb.lower), hb.c_star, spec,
        np.exp(-hb.pointwise_upper), np.exp(-hb.pointwise_lower),
        scale="survival", covariates=tuple(x), diagnostics=hb.diagnostics,
    )


# -- restricted residual mean ------------------------------------------------

def _rrm_from_cumulative(jump_times, cumvals, tau):
    """Exact ``int_0^tau exp(-Lambda)`` for step functions sharing ``jump_times``.

    ``cumvals`` holds the function values right after each jump, with shape
    ``(K,)`` or ``(B, K)``.
    """
    keep = jump_times < tau
    t = jump_times[keep]
    knots = np.concatenate([[0.0], t, [tau]])
    seg = np.diff(knots)
    vals = np.asarray(cumvals)[..., keep]
    left = np.concatenate([np.zeros(vals.shape[:-1] + (1,)), vals], axis=-1)
    # row-wise reduction, so a replicate equal to the estimate integrates to the same bits
    return (np.exp(-left) * seg).sum(axis=-1)


def rrm(lam: StepFunction, tau) -> float:
    if tau <= 0:
        raise ValueError("tau must be positive")
    return float(_rrm_from_cumulative(lam.jump_times, lam.values(), float(tau)))


@dataclass(frozen=True)
class RrmInterval:
    estimate: float
    lower: float
    upper: float
    half_width: float
    covariates: tuple
    reference: tuple | None = None


def _rrm_replicates(fitted, reps, x, tau):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != fitted.p:
        raise DimensionMismatch(f"covariate profile has length {x.size}, expected {fitted.p}")
    hat_cum = fitted.baseline.values() * np.exp((fitted.beta_hat * x).sum())
    ok = reps.converged
    star_cum = np.cumsum(reps.jumps[ok], axis=1) * np.exp((reps.beta_star[ok] * x).sum(axis=1))[:, None]
    return (_rrm_from_cumulative(fitted.event_times, hat_cum, tau),
            _rrm_from_cumulative(reps.event_times, star_cum, tau))


def rrm_ci(fitted: FittedCox, reps: ReplicateSet, x, tau, alpha=0.05, x_ref=None) -> RrmInterval:
    """Symmetric bootstrap interval for the restricted mean at profile ``x``.

    With ``x_ref`` the functional is the difference ``Psi(x) - Psi(x_ref)``.
    """
    est, star = _rrm_replicates(fitted, reps, x, tau)
    if x_ref is not None:
        est_ref, star_ref = _rrm_replicates(fitted, reps, x_ref, tau)
        est, star = est - est_ref, star - star_ref
    q = critical_value(np.abs(star - est), alpha)
    return RrmInterval(float(est), float(est - q), float(est + q), q, tuple(np.atleast_1d(x).astype(float)),
                       None if x_ref is None else tuple(np.atleast_1d(x_ref).astype(float)))


__all__ = [
    "BandSpec", "ConfidenceBand", "RrmInterval", "Transform", "Weight", "band_from_deviations",
    "band_grid", "build_band", "critical_value", "grid_index", "rrm", "rrm_ci", "sup_statistic",
    "survival_band", "weight_values",
]
