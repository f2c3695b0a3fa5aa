"""Wild-bootstrap replicates of ``(beta_hat, Lambda_0_hat)``.

Two resampling schemes are provided:

``direct``
    Closed-form perturbation built from the first-order expansions of the
    estimators. Multipliers weight either the counting-process increments
    ``dN_i`` or the estimated martingale increments ``dM_i``.

``ee`` (estimating equation)
    The score equation is re-solved with every subject's increments
    reweighted, and the Breslow estimator is recomputed at the resulting
    root. With ``dN`` increments the weights are ``1 + G_i``; with ``dMhat``
    increments the perturbed increment is ``dN_i + G_i dM_i``.

All replicates are computed in fixed-size chunks of a ``(B, n)`` multiplier
matrix, so results do not depend on the number of worker threads.
"""

from __future__ import annotations

import enum
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cox import FitOptions, FittedCox
from .data import StepFunction, SurvivalDataset, _check_beta, risk_moments
from .errors import AllReplicatesFailed, DimensionMismatch, SingularBootInformation

CHUNK = 64
FAILURE_WARN_FRACTION = 0.05


class MultiplierKind(str, enum.Enum):
    NORMAL = "normal"
    POISSON = "poisson"
    EXPONENTIAL = "exponential"


class Scheme(str, enum.Enum):
    DIRECT = "direct"
    EE = "ee"


class Increments(str, enum.Enum):
    DN = "dn"
    DMHAT = "dmhat"


@dataclass(frozen=True)
class BootConfig:
    scheme: Scheme = Scheme.EE
    increments: Increments = Increments.DN
    multiplier: MultiplierKind = MultiplierKind.NORMAL
    B: int = 999
    seed: int = 0
    fit_options: FitOptions = field(default_factory=FitOptions)

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "increments", Increments(self.increments))
        object.__setattr__(self, "multiplier", MultiplierKind(self.multiplier))
        if int(self.B) < 1:
            raise ValueError("B must be at least 1")


@dataclass(frozen=True)
class BootstrapReplicate:
    beta_star: np.ndarray
    baseline_star: StepFunction
    multipliers: np.ndarray
    converged: bool = True


def draw_multipliers(n, kind, rng) -> np.ndarray:
    """I.i.d. mean-zero, unit-variance multipliers."""
    kind = MultiplierKind(kind)
    if kind is MultiplierKind.NORMAL:
        return rng.standard_normal(n)
    if kind is MultiplierKind.POISSON:
        return rng.poisson(1.0, n) - 1.0
    return rng.standard_exponential(n) - 1.0


def multiplier_matrix(n, kind, seed, B) -> np.ndarray:
    """``(B, n)`` multipliers; row ``b`` comes from its own child stream of ``seed``.

    ``seed`` is an integer or a :class:`numpy.random.SeedSequence`.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    out = np.empty((B, n))
    for b, child in enumerate(ss.spawn(B)):
        out[b] = draw_multipliers(n, kind, np.random.Generator(np.random.PCG64(child)))
    return out


def _resolve_threads(threads):
    if threads is None:
        threads = int(os.environ.get("WILDBAND_THREADS", "1") or 1)
    return max(1, int(threads))


# -- the perturbed estimating equation -------------------------------------

def _increment_matrix(ds, fitted, increments):
    """Row-by-event-time increments that the multipliers act on."""
    if Increments(increments) is Increments.DN:
        return ds.dN
    return fitted.row_residuals


@dataclass(frozen=True)
class WeightedScore:
    """Score and Breslow estimator with perturbed increments.

    Every row ``r`` and event time ``u_k`` carries the increment weight
    ``omega[r, k] = dN[r, k] + g_r * M[r, k]`` where ``M`` is ``dN`` or the
    estimated martingale increments. The score is
    ``sum_{r,k} omega[r,k] (X_r - E(u_k, beta))`` and the baseline jumps are
    ``sum_r omega[r, k] / S0(u_k, beta)``.
    """

    ds: SurvivalDataset
    linear: np.ndarray  # sum_{r,k} omega[r,k] X_r
    weights: np.ndarray  # c_k = sum_r omega[r,k]

    @classmethod
    def build(cls, ds, fitted, G, increments):
        G = np.asarray(G, dtype=float)
        if G.shape != (ds.n,):
            raise DimensionMismatch(f"expected {ds.n} multipliers, got shape {G.shape}")
        M = _increment_matrix(ds, fitted, increments)
        g = G[ds.subject]
        omega = ds.dN + g[:, None] * M
        return cls(ds, ds.X.T @ omega.sum(axis=1), omega.sum(axis=0))

    def score(self, beta):
        s0, s1, _ = risk_moments(self.ds, _check_beta(self.ds, beta))
        return self.linear - self.weights @ (s1 / s0[:, None])

    def information(self, beta):
        s0, s1, s2 = risk_moments(self.ds, _check_beta(self.ds, beta))
        E = s1 / s0[:, None]
        V = s2 / s0[:, None, None] - np.einsum("kp,kq->kpq", E, E)
        return np.einsum("k,kpq->pq", self.weights, V)

    def criterion(self, beta):
        beta = _check_beta(self.ds, beta)
        s0 = risk_moments(self.ds, beta)[0]
        return float(beta @ self.linear - self.weights @ np.log(s0))

    def baseline(self, beta):
        s0 = risk_moments(self.ds, _check_beta(self.ds, beta))[0]
        return StepFunction(self.ds.event_times, self.weights / s0)


def ee_dmhat_substitution(fitted, ds, G):
    """Score and baseline functions of the EE scheme with ``dM`` increments."""
    eq = WeightedScore.build(ds, fitted, G, Increments.DMHAT)
    return eq.score, eq.baseline


# -- batched kernels --------------------------------------------------------

def _batch_moments(ds, betas):
    """Shifted risk-set sums for a batch of parameter vectors.

    Returns ``S0 (K, B)``, ``S1 (K, B, p)``, ``S2 (K, B, p, p)`` computed
    with weights ``exp(X beta_b - m_b)`` and the shifts ``m (B,)``.
    """
    eta = ds.X @ betas.T
    m = eta.max(axis=0)
    W = np.exp(eta - m)
    nr, B = W.shape
    p = ds.p
    YT = ds.at_risk.T
    S0 = YT @ W
    WX = (W[:, :, None] * ds.X[:, None, :]).reshape(nr, B * p)
    S1 = (YT @ WX).reshape(-1, B, p)
    XX = (ds.X[:, :, None] * ds.X[:, None, :]).reshape(nr, p * p)
    WXX = (W[:, :, None] * XX[:, None, :]).reshape(nr, B * p * p)
    S2 = (YT @ WXX).reshape(-1, B, p, p)
    return S0, S1, S2, m


def _ee_terms(ds, betas, linear, weights):
    S0, S1, S2, m = _batch_moments(ds, betas)
    # far-out candidates can empty a risk set numerically; the resulting
    # non-finite values fail every acceptance test below
    with np.errstate(all="ignore"):
        E = S1 / S0[:, :, None]
        V = S2 / S0[:, :, None, None] - E[:, :, :, None] * E[:, :, None, :]
        U = linear - np.einsum("bk,kbp->bp", weights, E)
        I = np.einsum("bk,kbpq->bpq", weights, V)
        crit = np.einsum("bp,bp->b", betas, linear) - np.einsum("bk,kb->b", weights, np.log(S0) + m)
    return U, I, crit


def _solve_batch(I, U):
    """Per-replicate ``I^{-1} U``; rows with a singular ``I`` come back as NaN."""
    out = np.full_like(U, np.nan)
    with np.errstate(all="ignore"):
        conds = np.linalg.cond(I)
    ok = np.isfinite(conds) & (conds < 1e12)
    if np.any(ok):
        out[ok] = np.linalg.solve(I[ok], U[ok][:, :, None])[:, :, 0]
    return out


def _ee_chunk(ds, fitted, G, increments, opts):
    """EE replicates for one chunk of multiplier rows."""
    M = _increment_matrix(ds, fitted, increments)
    g = G[:, ds.subject]
    linear = (ds.X.T @ ds.dN.sum(axis=1))[None, :] + g @ (ds.X * M.sum(axis=1)[:, None])
    weights = ds.n_events[None, :] + g @ M
    B = G.shape[0]
    beta = np.repeat(fitted.beta_hat[None, :], B, axis=0)
    U, I, crit = _ee_terms(ds, beta, linear, weights)
    active = np.ones(B, dtype=bool)
    converged = np.zeros(B, dtype=bool)
    for it in range(opts.max_iter + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        step = _solve_batch(I[idx], U[idx])
        bad = ~np.all(np.isfinite(step), axis=1)
        done = (~bad & (np.max(np.abs(U[idx]), axis=1) <= opts.score_tol)
                & (np.max(np.abs(step), axis=1) <= opts.step_tol))
        converged[idx[done]] = True
        active[idx[done | bad]] = False
        if it == opts.max_iter:
            break
        keep = ~(done | bad)
        idx, step = idx[keep], step[keep]
        if idx.size == 0:
            break
        # merit: the criterion where the information is positive definite, |U| elsewhere
        pd = np.all(np.linalg.eigvalsh(I[idx]) > 0, axis=1)
        scale = np.ones(idx.size)
        pending = np.ones(idx.size, dtype=bool)
        for _ in range(opts.step_halving_max + 1):
            j = np.flatnonzero(pending)
            cand = beta[idx[j]] + scale[j, None] * step[j]
            cU, cI, ccrit = _ee_terms(ds, cand, linear[idx[j]], weights[idx[j]])
            tol = 1e-12 * (1.0 + np.abs(crit[idx[j]]))
            better = np.where(pd[j], ccrit >= crit[idx[j]] - tol,
                              np.max(np.abs(cU), axis=1) < np.max(np.abs(U[idx[j]]), axis=1))
            acc = idx[j[better]]
            beta[acc], U[acc], I[acc], crit[acc] = cand[better], cU[better], cI[better], ccrit[better]
            pending[j[better]] = False
            scale[j[~better]] *= 0.5
            if not pending.any():
                break
        active[idx[pending]] = False
        active &= np.max(np.abs(beta), axis=1) <= opts.max_abs_beta

    converged &= np.max(np.abs(beta), axis=1) <= opts.max_abs_beta
    jumps = np.full((B, ds.event_times.size), np.nan)
    same = np.all(beta == fitted.beta_hat[None, :], axis=1)
    jumps[same] = weights[same] / fitted.s0[None, :]
    moved = np.flatnonzero(converged & ~same)
    if moved.size:
        S0, _, _, m = _batch_moments(ds, beta[moved])
        jumps[moved] = weights[moved] * np.exp(-m)[:, None] / S0.T
    beta[~converged] = np.nan
    return beta, jumps, converged


def _direct_information(ds, fitted, g):
    """``sum_e g_e^2 (X_e - E(u_e))^{(x)2}`` over event rows, per multiplier row.

    ``g`` holds row-level multipliers, shape ``(B, n_rows)``. The increments
    are always ``dN`` here, also in the martingale-residual variant.
    """
    ev = ds.event_rows
    a = ds.X[ev] - fitted.mean[ds.event_index]
    ge = g[:, ev]
    return np.einsum("be,ep,eq->bpq", ge * ge, a, a)


def _direct_chunk(ds, fitted, G, increments):
    """Direct-scheme replicates for one chunk of multiplier rows."""
    M = _increment_matrix(ds, fitted, increments)
    g = G[:, ds.subject]
    E = fitted.mean
    # U* = sum_{r,k} g_r M[r,k] (X_r - E_k)
    Q = ds.X * M.sum(axis=1)[:, None] - M @ E
    U = g @ Q
    I = _direct_information(ds, fitted, g)
    B = G.shape[0]
    delta = np.zeros_like(U)
    zero = np.all(U == 0.0, axis=1)
    ok = np.ones(B, dtype=bool)
    if np.any(~zero):
        nz = np.flatnonzero(~zero)
        delta[nz] = _solve_batch(I[nz], U[nz])
        ok[nz] = np.all(np.isfinite(delta[nz]), axis=1)
    dLam = fitted.baseline_jumps
    jumps = dLam[None, :] - (delta @ E.T) * dLam[None, :] + (g @ M) / fitted.s0[None, :]
    beta = fitted.beta_hat[None, :] + delta
    beta[~ok] = np.nan
    jumps[~ok] = np.nan
    return beta, jumps, ok


def _replicate_batch(fitted, ds, G, scheme, increments, opts, threads=None):
    G = np.atleast_2d(np.asarray(G, dtype=float))
    if G.shape[1] != ds.n:
        raise DimensionMismatch(f"expected {ds.n} multipliers per replicate, got {G.shape[1]}")
    scheme = Scheme(scheme)
    if scheme is Scheme.DIRECT:
        work = lambda rows: _direct_chunk(ds, fitted, rows, increments)  # noqa: E731
    else:
        work = lambda rows: _ee_chunk(ds, fitted, rows, increments, opts)  # noqa: E731
    chunks = [G[i:i + CHUNK] for i in range(0, G.shape[0], CHUNK)]
    threads = _resolve_threads(threads)
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    return tuple(np.concatenate(x) for x in zip(*parts))


def _single(fitted, ds, G, scheme, increments, opts):
    beta, jumps, ok = _replicate_batch(fitted, ds, G, scheme, increments, opts, threads=1)
    return BootstrapReplicate(beta[0], StepFunction(ds.event_times, jumps[0]),
                              np.asarray(G, dtype=float).copy(), bool(ok[0]))


def direct_replicate(fitted, ds, G, increments=Increments.DN) -> BootstrapReplicate:
    rep = _single(fitted, ds, G, Scheme.DIRECT, increments, None)
    if not rep.converged:
        raise SingularBootInformation("bootstrap information matrix is singular")
    return rep


def ee_replicate(fitted, ds, G, increments=Increments.DN, opts=None) -> BootstrapReplicate:
    """One estimating-equation replicate.

    A failed inner Newton solve does not raise; the replicate comes back with
    ``converged=False`` and NaN estimates.
    """
    return _single(fitted, ds, G, Scheme.EE, increments, opts or FitOptions())


# -- replicate sets -----------------------------------------------------------

def grid_index(event_times, grid):
    """Index into ``[0, cumsum(jumps)]`` giving the step-function value on ``grid``."""
    return np.searchsorted(event_times, grid, side="right")


@dataclass(frozen=True)
class ReplicateSet:
    config: BootConfig
    event_times: np.ndarray
    baseline_hat: np.ndarray  # Breslow jumps at event_times
    beta_hat: np.ndarray
    beta_star: np.ndarray  # (B, p), NaN for failed replicates
    jumps: np.ndarray  # (B, K)
    converged: np.ndarray  # (B,)
    multipliers: np.ndarray  # (B, n)
    grid: np.ndarray
    sigma2_hat: np.ndarray
    n: int
    warnings: tuple = ()

    @property
    def B(self):
        return self.converged.size

    @property
    def n_failed(self):
        return int((~self.converged).sum())

    @property
    def replicates(self):
        return [BootstrapReplicate(self.beta_star[b], StepFunction(self.event_times, self.jumps[b]),
                                   self.multipliers[b], bool(self.converged[b]))
                for b in range(self.B)]

    def deviations(self, grid, covariates=None):
        """``Lambda*(t) - Lambda_hat(t)`` on ``grid`` for converged replicates.

        With ``covariates`` the deviation refers to the covariate-specific
        cumulative hazard ``Lambda_0(t) exp(x'beta)``.
        """
        ok = self.converged
        return cumulative_deviations(self.event_times, self.baseline_hat, self.jumps[ok], grid,
                                     None if covariates is None else (self.beta_hat, self.beta_star[ok],
                                                                      covariates))

    def sigma2(self, grid, covariates=None):
        return empirical_variance(np.sqrt(self.n) * self.deviations(grid, covariates))


def cumulative_deviations(event_times, hat_jumps, star_jumps, grid, profile=None):
    """``Lambda*(t) - Lambda_hat(t)`` on ``grid`` from jump sizes at ``event_times``.

    ``profile = (beta_hat, beta_star, x)`` scales both curves by the relative
    risk ``exp(x'beta)`` of the covariate profile ``x``. A replicate whose
    jumps equal ``hat_jumps`` gives exact zeros, also with ``x = 0``.
    """
    idx = grid_index(event_times, grid)
    hat = np.concatenate([[0.0], np.cumsum(hat_jumps)])[idx]
    star = np.concatenate([np.zeros((star_jumps.shape[0], 1)), np.cumsum(star_jumps, axis=1)], axis=1)[:, idx]
    if profile is None:
        return star - hat[None, :]
    beta_hat, beta_star, x = profile
    x = np.asarray(x, dtype=float).reshape(-1)
    hat = hat * np.exp((beta_hat * x).sum())
    return star * np.exp((beta_star * x).sum(axis=1))[:, None] - hat[None, :]


def empirical_variance(samples):
    """Column-wise sample variance with divisor ``B - 1``; zero when ``B <= 1``."""
    if samples.shape[0] <= 1:
        return np.zeros(samples.shape[1])
    return samples.var(axis=0, ddof=1)


def run_bootstrap(fitted: FittedCox, ds: SurvivalDataset, cfg: BootConfig, grid=None, *,
                  multipliers=None, seed=None, threads=None) -> ReplicateSet:
    """Generate ``cfg.B`` replicates and the grid-wise bootstrap variance.

    ``multipliers`` overrides the random draws with a fixed ``(B, n)``
    matrix. ``seed`` may be a :class:`numpy.random.SeedSequence` to take
    precedence over ``cfg.seed``.
    """
    if grid is None:
        grid = np.union1d(ds.event_times, [ds.tau])
    grid = np.asarray(grid, dtype=float)
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    if multipliers is None:
        multipliers = multiplier_matrix(ds.n, cfg.multiplier, cfg.seed if seed is None else seed, cfg.B)
    G = np.atleast_2d(np.asarray(multipliers, dtype=float))
    beta, jumps, ok = _replicate_batch(fitted, ds, G, cfg.scheme, cfg.increments, cfg.fit_options, threads)
    if not ok.any():
        raise AllReplicatesFailed(f"all {ok.size} bootstrap replicates failed")
    notes = []
    frac = 1.0 - ok.mean()
    if frac > FAILURE_WARN_FRACTION:
        msg = f"{int((~ok).sum())} of {ok.size} bootstrap replicates failed and were excluded"
        notes.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    for arr in (beta, jumps, ok, G):
        arr.setflags(write=False)
    reps = ReplicateSet(cfg, ds.event_times, fitted.baseline_jumps, fitted.beta_hat, beta, jumps, ok, G,
                        grid, np.zeros(grid.size), fitted.n, tuple(notes))
    object.__setattr__(reps, "sigma2_hat", reps.sigma2(grid))
    return reps


__all__ = [
    "BootConfig", "BootstrapReplicate", "Increments", "MultiplierKind",
    "ReplicateSet", "Scheme", "WeightedScore", "direct_replicate", "draw_multipliers",
    "ee_dmhat_substitution", "ee_replicate", "multiplier_matrix", "run_bootstrap",
]
