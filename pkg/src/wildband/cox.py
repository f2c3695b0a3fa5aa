"""Cox partial-likelihood fitting and the Breslow baseline estimator.

Ties are handled with the Breslow convention: the risk-set sums are
evaluated once per distinct event time and every tied event contributes its
own increment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import StepFunction, SurvivalDataset, _check_beta, risk_moments
from .errors import (
    EmptyRiskSetAtEvent,
    MonotoneLikelihood,
    NoConvergence,
    SingularInformation,
)


@dataclass(frozen=True)
class FitOptions:
    """Newton-Raphson settings.

    ``score_tol`` bounds the sup-norm of the score at convergence and
    ``step_tol`` the sup-norm of the last Newton step; requiring both keeps
    a flat likelihood at ``|beta| -> inf`` from passing as converged.
    """

    max_iter: int = 50
    score_tol: float = 1e-9
    step_tol: float = 1e-6
    step_halving_max: int = 10
    max_abs_beta: float = 50.0
    init_beta: tuple | None = None

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.score_tol <= 0 or self.step_tol <= 0:
            raise ValueError("tolerances must be strictly positive")
        if self.step_halving_max < 0:
            raise ValueError("step_halving_max must be >= 0")
        if self.max_abs_beta <= 0:
            raise ValueError("max_abs_beta must be positive")


@dataclass(frozen=True)
class FittedCox:
    beta_hat: np.ndarray
    information: np.ndarray
    baseline: StepFunction
    log_pl: float
    residual_increments: np.ndarray  # (n subjects, K event times)
    converged: bool
    iterations: int
    n: int
    event_times: np.ndarray
    # risk-set quantities at beta_hat, one entry per event time
    s0: np.ndarray = field(repr=False)
    mean: np.ndarray = field(repr=False)
    row_residuals: np.ndarray = field(repr=False)
    score: np.ndarray = field(repr=False)
    n_skipped: int = 0

    @property
    def p(self):
        return self.beta_hat.size

    @property
    def baseline_jumps(self):
        return self.baseline.jump_sizes

    def covariance(self):
        """Inverse observed information (model-based covariance of beta_hat)."""
        return np.linalg.inv(self.information)

    def standard_errors(self):
        return np.sqrt(np.diag(self.covariance()))


def _pl_terms(ds: SurvivalDataset, beta):
    """Log partial likelihood, score and information in one pass.

    The linear predictor is shifted by its maximum so that ``exp`` cannot
    overflow; E and V are invariant to the shift.
    """
    eta = ds.X @ beta
    shift = eta.max()
    w = np.exp(eta - shift)
    Yw = ds.at_risk * w[:, None]
    s0 = Yw.sum(axis=0)
    if np.any(s0 <= 0):
        k = int(np.flatnonzero(s0 <= 0)[0])
        raise EmptyRiskSetAtEvent(f"empty risk set at event time {ds.event_times[k]:g}")
    P = Yw / s0  # risk-set probabilities per event time
    E = P.T @ ds.X
    d = ds.n_events
    ev = ds.event_rows
    logpl = float(eta[ev].sum() - (d * (np.log(s0) + shift)).sum())
    # centred forms; the raw S2/S0 - E^2 cancels badly once one row dominates
    xsum = np.zeros((d.size, ds.p))
    np.add.at(xsum, ds.event_index, ds.X[ev])
    U = np.einsum("rk,krp->p", P, xsum[:, None, :] - d[:, None, None] * ds.X[None, :, :])
    C = ds.X[:, None, :] - E[None, :, :]
    I = np.einsum("k,rk,rkp,rkq->pq", d, P, C, C)
    return logpl, U, I


def log_partial_likelihood(ds: SurvivalDataset, beta) -> float:
    return _pl_terms(ds, _check_beta(ds, beta))[0]


def score(ds: SurvivalDataset, beta) -> np.ndarray:
    return _pl_terms(ds, _check_beta(ds, beta))[1]


def information(ds: SurvivalDataset, beta) -> np.ndarray:
    return _pl_terms(ds, _check_beta(ds, beta))[2]


def _newton_step(I, U):
    try:
        L = np.linalg.cholesky(I)
    except np.linalg.LinAlgError:
        raise SingularInformation("information matrix is not positive definite") from None
    if np.min(np.diag(L)) <= 1e-12 * max(1.0, np.max(np.diag(L))):
        raise SingularInformation("information matrix is numerically singular")
    return np.linalg.solve(I, U)


def newton_solve(objective, beta0, opts: FitOptions):
    """Maximise a concave criterion by Newton-Raphson with step halving.

    ``objective(beta)`` returns ``(value, gradient, negative_hessian)``.
    Returns ``(beta, value, gradient, negative_hessian, iterations)``.
    """
    beta = np.array(beta0, dtype=float)
    value, U, I = objective(beta)
    last_gain = np.inf
    for it in range(opts.max_iter + 1):
        if not np.all(np.isfinite(U)):
            raise NoConvergence("score became non-finite")
        step = _newton_step(I, U)
        if np.max(np.abs(U)) <= opts.score_tol and np.max(np.abs(step)) <= opts.step_tol:
            # one polishing step takes the score from ~score_tol down to rounding level
            cand = beta + step
            cvalue, cU, cI = objective(cand)
            if (np.all(np.isfinite(cU)) and cvalue >= value - 1e-12 * (1.0 + abs(value))
                    and np.max(np.abs(cU)) <= np.max(np.abs(U))):
                return cand, cvalue, cU, cI, it + 1
            return beta, value, U, I, it
        if it == opts.max_iter:
            break
        scale = 1.0
        for _ in range(opts.step_halving_max + 1):
            cand = beta + scale * step
            if np.max(np.abs(cand)) > opts.max_abs_beta:
                raise MonotoneLikelihood(
                    f"|beta| exceeded {opts.max_abs_beta:g}; the estimate appears to be infinite")
            cvalue, cU, cI = objective(cand)
            if cvalue >= value - 1e-12 * (1.0 + abs(value)):
                break
            scale *= 0.5
        last_gain = cvalue - value
        beta, value, U, I = cand, cvalue, cU, cI
    if abs(last_gain) <= 1e-10 * (1.0 + abs(value)):
        raise MonotoneLikelihood("likelihood is flat while beta keeps moving; the estimate appears to be infinite")
    raise NoConvergence(f"no convergence after {opts.max_iter} iterations")


def breslow(ds: SurvivalDataset, beta) -> StepFunction:
    """Breslow estimator of the cumulative baseline hazard at ``beta``."""
    return _breslow_with_s0(ds, _check_beta(ds, beta))[0]


def _breslow_with_s0(ds, beta):
    s0 = risk_moments(ds, beta)[0]
    at_risk = s0 > 0
    jumps = np.zeros_like(s0)
    jumps[at_risk] = ds.n_events[at_risk] / s0[at_risk]
    return StepFunction(ds.event_times[at_risk], jumps[at_risk]), s0, int((~at_risk).sum())


def _row_residuals(ds, beta, jumps):
    w = np.exp(ds.X @ beta)
    return ds.dN - ds.at_risk * w[:, None] * jumps[None, :]


def residual_increments(ds: SurvivalDataset, fitted: FittedCox) -> np.ndarray:
    """Estimated martingale increments ``dM_i(u)``, shape (n subjects, K).

    Column ``k`` refers to ``fitted.event_times[k]``; every column sums to
    zero up to rounding.
    """
    return fitted.residual_increments


def _by_subject(ds, row_values):
    out = np.zeros((ds.n, row_values.shape[1]))
    np.add.at(out, ds.subject, row_values)
    return out


def fit(ds: SurvivalDataset, opts: FitOptions | None = None) -> FittedCox:
    opts = opts or FitOptions()
    if ds.event_times.size == 0:
        raise NoConvergence("dataset has no events on (0, tau]")
    beta0 = np.zeros(ds.p) if opts.init_beta is None else _check_beta(ds, opts.init_beta)
    beta, logpl, U, I, iters = newton_solve(lambda b: _pl_terms(ds, b), beta0, opts)

    base, s0, skipped = _breslow_with_s0(ds, beta)
    jumps = np.zeros(ds.event_times.size)
    jumps[s0 > 0] = base.jump_sizes
    _, s1, _ = risk_moments(ds, beta)
    mean = np.zeros_like(s1)
    mean[s0 > 0] = s1[s0 > 0] / s0[s0 > 0, None]
    rows = _row_residuals(ds, beta, jumps)
    for arr in (beta, I, rows, s0, mean, U):
        arr.setflags(write=False)
    return FittedCox(
        beta_hat=beta,
        information=I,
        baseline=base,
        log_pl=logpl,
        residual_increments=_by_subject(ds, rows),
        converged=True,
        iterations=iters,
        n=ds.n,
        event_times=ds.event_times,
        s0=s0,
        mean=mean,
        row_residuals=rows,
        score=U,
        n_skipped=skipped,
    )
