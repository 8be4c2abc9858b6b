"""EM estimation: E-step delegation, M-step updates, restarts and model selection.

The generator and initial-distribution updates are closed form.  The point
process parameters maximize the expected complete log-likelihood

    F_i(mu, alpha, beta) = sum_n s[n,i] log lambda_i(t_n-)
                           - sum_segments lambda_i(segment) * g(segment, i)

which separates across states, so each state is a 3-parameter problem solved
by Nelder-Mead in log space (1 parameter when alpha is pinned to zero).  A
dedicated Poisson-rate fit (`fit_mmpp`) uses the exact closed-form update
mu_i = sum_n s[n,i] / ED_i instead.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import MMHPError, NumericalError, StateStarvationError
from .inference import InferenceState, estep_statistics, forward_backward
from .model import (EventSequence, IntervalGrid, ModelParams,
                    exp_decay_accumulator)
from .transition import TransitionBundle

DEAD_STATE_FRACTION = 1e-8


@dataclass(frozen=True)
class FitConfig:
    """Settings of one EM estimation run."""

    delta: float
    max_steps: int = 2000
    tol: float = 1e-6
    inner_max_iter: int = 200
    inner_xtol: float = 1e-8
    restarts: int = 3
    seed: int = None
    fix_alpha_zero: bool = False

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


@dataclass
class FitResult:
    """Canonicalized parameter estimate plus the fit diagnostics."""

    params: ModelParams
    loglik: float
    loglik_trace: np.ndarray
    n_steps: int
    converged: bool
    n_params: int
    aic: float
    bic: float
    mmpp: bool


def n_free_parameters(M: int, mmpp: bool) -> int:
    """(mu[, alpha, beta]) per state plus off-diagonal generator and xi0 freedoms."""
    hawkes = M if mmpp else 3 * M
    return hawkes + M * (M - 1) + (M - 1)


def information_criteria(loglik: float, M: int, K: int, mmpp: bool = False):
    """(AIC, BIC) for a fitted model with K observed events."""
    k = n_free_parameters(M, mmpp)
    return 2.0 * k - 2.0 * loglik, k * float(np.log(K)) - 2.0 * loglik


def initial_params(events: EventSequence, M: int, delta: float,
                   fix_alpha_zero: bool = False, rng: np.random.Generator = None,
                   jitter: bool = False) -> ModelParams:
    """Moment-free starting point: geometric spread of rates around K / t_K.

    Baselines use ratios (0.5, 1, 2, ...) across states to break label
    symmetry; restarts multiply all positive parameters by exp(U(-0.3, 0.3)).
    """
    K = events.K
    t_K = float(events.times[-1])
    base_rate = K / t_K
    ratios = 0.5 * 2.0 ** np.arange(M)
    mu = base_rate * ratios
    if fix_alpha_zero:
        alpha = np.zeros(M)
        beta = np.ones(M)
    else:
        alpha = 0.5 * mu * (np.arange(1, M + 1) / M)
        beta = 2.0 * alpha * M
    q_off = float(np.clip(M * max(10.0, K / 100.0) / t_K, 1e-4, 10.0))
    if jitter:
        if rng is None:
            raise ValueError("jitter requires a random generator")
        mu = mu * np.exp(rng.uniform(-0.3, 0.3, M))
        if not fix_alpha_zero:
            alpha = alpha * np.exp(rng.uniform(-0.3, 0.3, M))
            beta = beta * np.exp(rng.uniform(-0.3, 0.3, M))
        q_off = q_off * float(np.exp(rng.uniform(-0.3, 0.3)))
    Q = np.full((M, M), q_off)
    np.fill_diagonal(Q, -q_off * (M - 1))
    xi0 = np.full(M, 1.0 / M)
    return ModelParams(mu=mu, alpha=alpha, beta=beta, Q=Q, xi0=xi0, delta=delta)


def m_step_markov(inf: InferenceState, params: ModelParams):
    """Closed-form generator and initial-distribution updates."""
    M = params.M
    ED = inf.ED
    dead = np.where(ED <= 0.0)[0]
    if dead.size:
        raise StateStarvationError(f"state {int(dead[0])} has zero expected occupancy")
    Q = inf.EW / ED[:, None]
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    xi0 = params.xi0 * inf.R[1]
    total = xi0.sum()
    if not total > 0:
        raise NumericalError("initial-distribution update degenerated to zero mass")
    return Q, xi0 / total


def _hawkes_objective_factory(events, grid, inf, state, delta):
    """Expected-log-likelihood objective of one state's (mu, alpha, beta)."""
    times = events.times
    s_ev = inf.smoothed[:, state]
    g_seg = inf.cache.g_seg[:, state]
    g_res = inf.cache.g_res[:, state]
    seg_interval = grid.seg_interval
    seg_lag = grid.seg_k * delta
    res_lag = grid.ell * delta

    def value(mu, alpha, beta):
        if not (1e-12 < mu < 1e9 and 0.0 <= alpha < 1e9 and 1e-8 < beta < 1e8):
            return -np.inf
        if alpha == 0.0:
            lam_ev_total = mu * g_res.sum() + mu * g_seg.sum()
            return float(s_ev.sum() * np.log(mu) - lam_ev_total)
        S = exp_decay_accumulator(times, beta)
        lam_res = mu + alpha * np.exp(-beta * res_lag) * S
        term_events = float(s_ev @ np.log(np.maximum(lam_res, 1e-300)))
        lam_seg = mu + alpha * np.exp(-beta * seg_lag) * S[seg_interval]
        term_integral = float(lam_seg @ g_seg + lam_res @ g_res)
        return term_events - term_integral

    return value


def m_step_hawkes(params: ModelParams, events: EventSequence, grid: IntervalGrid,
                  inf: InferenceState, inner_max_iter: int = 200,
                  inner_xtol: float = 1e-8):
    """Numerical update of (mu, alpha, beta), one simplex search per state.

    Keeps the current estimate of any state whose search fails to improve the
    objective, so the EM surrogate never decreases.
    """
    M = params.M
    mu = params.mu.copy()
    alpha = params.alpha.copy()
    beta = params.beta.copy()
    pinned = bool(np.all(params.alpha == 0.0))
    for i in range(M):
        value = _hawkes_objective_factory(events, grid, inf, i, params.delta)
        current = value(mu[i], alpha[i], beta[i])
        if not np.isfinite(current):
            raise NumericalError(f"M-step objective not finite at current estimate (state {i})")
        if pinned:
            fun = lambda z: -value(float(np.exp(z[0])), 0.0, beta[i])
            x0 = np.array([np.log(mu[i])])
        else:
            fun = lambda z: -value(*np.exp(z))
            x0 = np.log([mu[i], max(alpha[i], 1e-10), beta[i]])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = minimize(fun, x0, method="Nelder-Mead",
                           options={"maxiter": inner_max_iter, "xatol": inner_xtol,
                                    "fatol": 1e-12, "disp": False})
        if np.isfinite(res.fun) and -res.fun > current:
            if pinned:
                mu[i] = float(np.exp(res.x[0]))
            else:
                mu[i], alpha[i], beta[i] = np.exp(res.x)
    return mu, alpha, beta


def m_step_poisson_rates(inf: InferenceState):
    """Exact rate update for the pure Poisson-per-state (MMPP) model."""
    return inf.smoothed.sum(axis=0) / inf.ED


def canonical_order(params: ModelParams) -> np.ndarray:
    """State order by ascending excitation alpha, baseline mu breaking ties."""
    return np.lexsort((params.mu, params.alpha))


def canonicalize(params: ModelParams) -> ModelParams:
    order = canonical_order(params)
    return ModelParams(
        mu=params.mu[order], alpha=params.alpha[order], beta=params.beta[order],
        Q=params.Q[np.ix_(order, order)], xi0=params.xi0[order], delta=params.delta,
    )


def _em_run(events: EventSequence, config: FitConfig, theta: ModelParams,
            grid: IntervalGrid, closed_form_rates: bool):
    t_K = float(events.times[-1])
    trace = []
    current = -np.inf
    converged = False
    for _ in range(config.max_steps):
        bundle = TransitionBundle(theta, events, grid)
        inf = forward_backward(theta, events, bundle)
        trace.append(inf.loglik)
        if inf.loglik - current < config.tol:
            converged = True
            break
        current = inf.loglik
        estep_statistics(theta, events, bundle, inf)
        if np.any(inf.ED < DEAD_STATE_FRACTION * t_K):
            dead = int(np.argmin(inf.ED))
            raise StateStarvationError(
                f"state {dead} starved (expected occupancy {inf.ED[dead]:.3e} s)"
            )
        Q_new, xi0_new = m_step_markov(inf, theta)
        if closed_form_rates:
            mu_new = m_step_poisson_rates(inf)
            alpha_new, beta_new = theta.alpha, theta.beta
        else:
            mu_new, alpha_new, beta_new = m_step_hawkes(
                theta, events, grid, inf, config.inner_max_iter, config.inner_xtol
            )
        theta = ModelParams(mu=mu_new, alpha=alpha_new, beta=beta_new,
                            Q=Q_new, xi0=xi0_new, delta=theta.delta)
    else:
        # step budget exhausted after an M-step: evaluate the final parameters
        inf = forward_backward(theta, events, TransitionBundle(theta, events, grid))
        trace.append(inf.loglik)
    return theta, np.asarray(trace), converged


def _finalize(events, config, theta, trace, converged, mmpp) -> FitResult:
    theta = canonicalize(theta)
    loglik = float(trace[-1])
    aic, bic = information_criteria(loglik, theta.M, events.K, mmpp=mmpp)
    return FitResult(params=theta, loglik=loglik, loglik_trace=trace,
                     n_steps=len(trace), converged=converged,
                     n_params=n_free_parameters(theta.M, mmpp), aic=aic, bic=bic,
                     mmpp=mmpp)


def _fit_with_restarts(events, M, config, grid, fix_alpha_zero, closed_form_rates,
                       mmpp_count) -> FitResult:
    if events.K < 2:
        raise ValueError("fitting requires at least two events")
    rng = np.random.default_rng(config.seed)
    best = None
    last_error = None
    for attempt in range(max(config.restarts, 1)):
        theta0 = initial_params(events, M, config.delta, fix_alpha_zero=fix_alpha_zero,
                                rng=rng, jitter=attempt > 0)
        try:
            theta, trace, converged = _em_run(events, config, theta0, grid,
                                              closed_form_rates)
        except (StateStarvationError, NumericalError) as exc:
            last_error = exc
            continue
        result = _finalize(events, config, theta, trace, converged, mmpp_count)
        if best is None or result.loglik > best.loglik:
            best = result
    if best is None:
        raise last_error if last_error is not None else MMHPError("all restarts failed")
    return best


def fit(events: EventSequence, M: int, config: FitConfig) -> FitResult:
    """EM estimation of the M-state model on one event sequence.

    With ``config.fix_alpha_zero`` the excitation is pinned to zero and the
    baseline update still runs through the generic simplex machinery; use
    :func:`fit_mmpp` for the closed-form variant.
    """
    grid = IntervalGrid(events, config.delta)
    return _fit_with_restarts(events, M, config, grid,
                              fix_alpha_zero=config.fix_alpha_zero,
                              closed_form_rates=False,
                              mmpp_count=config.fix_alpha_zero)


def fit_mmpp(events: EventSequence, M: int, config: FitConfig) -> FitResult:
    """Dedicated Markov-modulated Poisson fit with closed-form rate updates.

    With zero excitation the likelihood does not depend on the freezing step,
    so the internal grid collapses every interval to a single residual
    segment; the reported parameters keep ``config.delta``.
    """
    collapsed = IntervalGrid(events, float(events.durations.max()))
    return _fit_with_restarts(events, M, config, collapsed,
                              fix_alpha_zero=True, closed_form_rates=True,
                              mmpp_count=True)


def _selection_task(args):
    events_times, horizon, M, delta, mmpp, config_kwargs = args
    events = EventSequence(np.asarray(events_times), horizon)
    config = FitConfig(delta=delta, **config_kwargs)
    if mmpp:
        result = fit_mmpp(events, M, config)
    else:
        result = fit(events, M, config)
    return {"model": "mmpp" if mmpp else "mmhp", "M": M,
            "delta": None if mmpp else delta, "loglik": result.loglik,
            "n_params": result.n_params, "aic": result.aic, "bic": result.bic}


def model_selection(events: EventSequence, M_grid, delta_grid, include_mmpp: bool,
                    config: FitConfig, n_jobs: int = 1):
    """Fit every (M, delta) configuration plus optional MMPP benchmarks, rank by AIC.

    Returns one row per configuration with an AIC rank (1 = best).
    """
    config_kwargs = {"max_steps": config.max_steps, "tol": config.tol,
                     "inner_max_iter": config.inner_max_iter,
                     "inner_xtol": config.inner_xtol, "restarts": config.restarts,
                     "seed": config.seed}
    tasks = []
    for M in M_grid:
        for delta in delta_grid:
            tasks.append((events.times, events.horizon, M, delta, False, config_kwargs))
        if include_mmpp:
            tasks.append((events.times, events.horizon, M, delta_grid[0], True,
                          config_kwargs))
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            rows = list(pool.map(_selection_task, tasks))
    else:
        rows = [_selection_task(t) for t in tasks]
    order = np.argsort([r["aic"] for r in rows], kind="stable")
    for rank, idx in enumerate(order, start=1):
        rows[idx]["rank"] = rank
    return rows
