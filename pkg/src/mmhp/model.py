"""Model parameterization, event sequences and the step-frozen intensity grid.

The conditional intensity of the process is frozen on sub-intervals of length
``delta`` anchored at the last event: on the k-th step after event time
t_{n-1}, state i carries the value

    lambda_i(n, k) = mu_i + sum_{t_l <= t_{n-1}} phi_i((t_{n-1} - t_l) + k*delta),

where phi_i is a nonnegative decreasing kernel.  Only the exponential kernel
phi_i(t) = alpha_i * exp(-beta_i * t) ships; it admits an O(1)-per-point
evaluation through per-state decay accumulators.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError

MAX_STATES = 10

# Intensities are clamped at this floor before any logarithm downstream.
INTENSITY_FLOOR = 1e-300


class ExcitationKernel(ABC):
    """Nonnegative decreasing excitation kernel, one component per hidden state."""

    @abstractmethod
    def phi(self, lag):
        """Kernel values at nonnegative lags; shape ``lag.shape + (M,)``."""


@dataclass(frozen=True)
class ExponentialKernel(ExcitationKernel):
    alpha: np.ndarray
    beta: np.ndarray

    def phi(self, lag):
        lag = np.asarray(lag, dtype=float)
        return self.alpha * np.exp(-self.beta * lag[..., None])


@dataclass(frozen=True)
class ModelParams:
    """Full parameter set of an M-state Markov-modulated Hawkes process.

    Attributes
    ----------
    mu : baseline intensities per state, events/second, all > 0.
    alpha : kernel jump sizes per state, events/second, all >= 0 (all zero gives an MMPP).
    beta : kernel decay rates per state, 1/second, all > 0.
    Q : M x M generator of the hidden chain (rows sum to zero).
    xi0 : initial state distribution.
    delta : kernel freezing step, seconds.
    """

    mu: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    Q: np.ndarray
    xi0: np.ndarray
    delta: float

    def __post_init__(self):
        object.__setattr__(self, "mu", np.atleast_1d(np.asarray(self.mu, dtype=float)))
        object.__setattr__(self, "alpha", np.atleast_1d(np.asarray(self.alpha, dtype=float)))
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=float)))
        object.__setattr__(self, "Q", np.atleast_2d(np.asarray(self.Q, dtype=float)))
        object.__setattr__(self, "xi0", np.atleast_1d(np.asarray(self.xi0, dtype=float)))
        object.__setattr__(self, "delta", float(self.delta))
        M = self.mu.shape[0]
        if not 1 <= M <= MAX_STATES:
            raise ValueError(f"number of states must be in [1, {MAX_STATES}], got {M}")
        for name in ("alpha", "beta", "xi0"):
            if getattr(self, name).shape != (M,):
                raise ValueError(f"{name} must have shape ({M},)")
        if self.Q.shape != (M, M):
            raise ValueError(f"Q must have shape ({M}, {M})")
        if not np.all(self.mu > 0):
            raise ValueError("baseline intensities mu must be strictly positive")
        if not np.all(self.alpha >= 0):
            raise ValueError("kernel sizes alpha must be nonnegative")
        if not np.all(self.beta > 0):
            raise ValueError("kernel decay rates beta must be strictly positive")
        off = self.Q[~np.eye(M, dtype=bool)]
        if off.size and np.any(off < 0):
            raise ValueError("off-diagonal generator entries must be nonnegative")
        if np.any(np.abs(self.Q.sum(axis=1)) > 1e-12):
            raise ValueError("generator rows must sum to zero")
        if np.any(self.xi0 < 0) or abs(self.xi0.sum() - 1.0) > 1e-12:
            raise ValueError("xi0 must be a probability vector")
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    @property
    def M(self) -> int:
        return self.mu.shape[0]

    @property
    def kernel(self) -> ExponentialKernel:
        return ExponentialKernel(self.alpha, self.beta)

    @property
    def exit_rates(self) -> np.ndarray:
        """q_i = -Q_ii, the exit rate of each state."""
        return -np.diag(self.Q)

    def is_mmpp(self) -> bool:
        return bool(np.all(self.alpha == 0.0))


@dataclass(frozen=True)
class EventSequence:
    """Strictly increasing event times on (0, T], with the origin t_0 = 0 as anchor."""

    times: np.ndarray
    horizon: float = None  # defaults to the last event time

    def __post_init__(self):
        t = np.atleast_1d(np.asarray(self.times, dtype=float))
        object.__setattr__(self, "times", t)
        if t.size == 0:
            raise ValueError("event sequence must contain at least one event")
        if t[0] <= 0 or np.any(np.diff(t) <= 0):
            raise ValueError("event times must be strictly increasing and positive")
        horizon = float(t[-1]) if self.horizon is None else float(self.horizon)
        if horizon < t[-1]:
            raise ValueError("horizon must not precede the last event")
        object.__setattr__(self, "horizon", horizon)

    @property
    def K(self) -> int:
        return self.times.shape[0]

    @property
    def durations(self) -> np.ndarray:
        """x_n = t_n - t_{n-1} with t_0 = 0; one entry per inter-event interval."""
        return np.diff(self.times, prepend=0.0)

    def anchor(self, n: int) -> float:
        """Left endpoint of interval n (0-based): t_{n-1}, or 0 for the first."""
        return 0.0 if n == 0 else float(self.times[n - 1])


class IntervalGrid:
    """Decomposition of every inter-event interval into full delta steps plus a residual.

    Interval n (0-based, spanning (t_{n-1}, t_n]) is cut into ``ell[n]`` full
    steps of length ``delta`` followed by a residual of length ``res[n]`` in
    (0, delta].  An exact multiple x_n = l*delta is folded into the residual
    (ell = l-1, res = delta) so no zero-length segment ever appears; the
    residual then carries the same frozen intensity as the step it replaces.

    Flat segment bookkeeping (used by the transition and inference machinery):
    the full steps of all intervals are concatenated in interval order;
    ``seg_interval``/``seg_k`` give the owning interval and step index of each
    flat slot, ``offsets[n]`` the first slot of interval n.
    """

    def __init__(self, events: EventSequence, delta: float):
        if not delta > 0:
            raise ValueError("delta must be positive")
        self.events = events
        self.delta = float(delta)
        x = events.durations
        self.x = x
        # floor((x - eps)/delta): folds exact multiples (up to float noise in x)
        # into a full-length residual instead of a zero-length one
        ell = np.floor(x / self.delta - 1e-9).astype(np.int64)
        ell[ell < 0] = 0
        self.ell = ell
        self.res = x - ell * self.delta
        self.offsets = np.concatenate(([0], np.cumsum(ell)))
        self.n_segments = int(self.offsets[-1])
        self.seg_interval = np.repeat(np.arange(events.K), ell)
        self.seg_k = np.arange(self.n_segments) - np.repeat(self.offsets[:-1], ell)
        # intervals sorted by decreasing step count; the first active_counts[j]
        # entries of `order` are exactly the intervals with more than j steps
        self.order = np.argsort(-ell, kind="stable")
        self.max_ell = int(ell.max()) if events.K else 0
        self.active_counts = events.K - np.searchsorted(
            np.sort(ell), np.arange(self.max_ell), side="right"
        )

    @property
    def K(self) -> int:
        return self.events.K

    def active(self, j: int) -> np.ndarray:
        """Indices of the intervals with ell > j."""
        return self.order[: self.active_counts[j]]


def grid_decompose(events: EventSequence, delta: float) -> IntervalGrid:
    """Cut every inter-event interval into full delta steps plus a residual."""
    return IntervalGrid(events, delta)


def exp_decay_accumulator(times: np.ndarray, beta: float) -> np.ndarray:
    """S[n] = sum over events t_l <= anchor(n) of exp(-beta * (anchor(n) - t_l)).

    anchor(n) is the left endpoint of interval n, so S[0] = 0 and
    S[n] = S[n-1] * exp(-beta * x_{n-1}) + 1.  Evaluated blockwise with local
    re-anchoring so the rescaled exponentials stay in range for any beta.
    """
    times = np.asarray(times, dtype=float)
    K = times.shape[0]
    S = np.zeros(K)
    if K <= 1:
        return S
    if beta * (times[-1] - times[0]) / 600.0 > 256:
        # decay so fast relative to the span that blocking would fragment
        s = 0.0
        prev_anchor = 0.0
        for n in range(1, K):
            s = s * math.exp(-beta * (times[n - 1] - prev_anchor)) + 1.0
            S[n] = s
            prev_anchor = times[n - 1]
        return S
    start = 0
    carry = 0.0        # S[start], anchored at anchor(start)
    ref = 0.0          # anchor(start)
    while start < K - 1:
        base = times[start]
        stop = int(np.searchsorted(times, base + 600.0 / beta, side="right"))
        stop = min(max(stop, start + 1), K - 1)
        w = np.exp(beta * (times[start:stop] - base))
        inner = carry * math.exp(-beta * (base - ref)) + np.cumsum(w)
        S[start + 1 : stop + 1] = inner * np.exp(-beta * (times[start:stop] - base))
        carry = S[stop]
        ref = times[stop - 1]
        start = stop
    return S


class PiecewiseIntensity:
    """Per-state intensity values frozen on the delta grid of each interval.

    For the exponential kernel the whole surface derives from the decay
    accumulators S[n, i]; a generic kernel falls back to direct summation over
    the event history.
    """

    def __init__(self, params: ModelParams, events: EventSequence,
                 grid: IntervalGrid = None, kernel: ExcitationKernel = None):
        self.params = params
        self.events = events
        self.grid = grid if grid is not None else IntervalGrid(events, params.delta)
        kernel = params.kernel if kernel is None else kernel
        self.kernel = kernel
        if isinstance(kernel, ExponentialKernel):
            self.S = np.column_stack(
                [exp_decay_accumulator(events.times, float(b)) for b in kernel.beta]
            )
        else:
            self.S = None

    def at(self, n: int, k: int) -> np.ndarray:
        """Intensity vector at grid point k of interval n (0-based interval index)."""
        if not 0 <= n < self.events.K:
            raise IndexError(f"interval index {n} out of range")
        if not 0 <= k <= self.grid.ell[n]:
            raise IndexError(f"step index {k} out of range for interval {n}")
        p = self.params
        if self.S is not None:
            return p.mu + p.alpha * np.exp(-p.beta * k * p.delta) * self.S[n]
        hist = self.events.times[:n]  # all events up to and including the anchor
        if hist.size == 0:
            return p.mu.copy()
        lags = (self.events.anchor(n) - hist) + k * p.delta
        return p.mu + self.kernel.phi(lags).sum(axis=0)

    def at_event(self, n: int) -> np.ndarray:
        """Intensity vector on the residual segment of interval n (the value at t_n-)."""
        return self.at(n, int(self.grid.ell[n]))

    def value_at(self, t: float) -> np.ndarray:
        """Intensity vector at an arbitrary time in (0, t_K], left-continuous at grid points."""
        times = self.events.times
        if not 0 < t <= times[-1]:
            raise ValueError("t must lie in (0, t_K]")
        n = int(np.searchsorted(times, t, side="left"))
        u = t - self.events.anchor(n)
        k = min(max(math.floor(u / self.params.delta - 1e-9), 0), int(self.grid.ell[n]))
        return self.at(n, k)

    def segment_values(self):
        """(lam_seg, lam_res): intensities on all flat delta segments and residuals.

        lam_seg has shape (n_segments, M) in flat slot order; lam_res has shape
        (K, M) and holds the residual-segment value of each interval.
        """
        p = self.params
        g = self.grid
        if self.S is not None:
            decay_seg = np.exp(-np.multiply.outer(g.seg_k * p.delta, p.beta))
            lam_seg = p.mu + p.alpha * decay_seg * self.S[g.seg_interval]
            decay_res = np.exp(-np.multiply.outer(g.ell * p.delta, p.beta))
            lam_res = p.mu + p.alpha * decay_res * self.S
            return lam_seg, lam_res
        lam_seg = np.empty((g.n_segments, p.M))
        for s in range(g.n_segments):
            lam_seg[s] = self.at(int(g.seg_interval[s]), int(g.seg_k[s]))
        lam_res = np.empty((g.K, p.M))
        for n in range(g.K):
            lam_res[n] = self.at_event(n)
        return lam_seg, lam_res


def intensity_at_grid(params: ModelParams, events: EventSequence, n: int, k: int) -> np.ndarray:
    """Intensity vector at grid point k of interval n; see PiecewiseIntensity.at."""
    return PiecewiseIntensity(params, events).at(n, k)


def stationary_distribution(Q: np.ndarray) -> np.ndarray:
    """Stationary distribution pi of a CTMC generator: pi Q = 0, sum(pi) = 1."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    M = Q.shape[0]
    if M == 1:
        return np.ones(1)
    A = np.vstack([Q.T[:-1], np.ones(M)])
    b = np.zeros(M)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"generator is singular or reducible: {exc}") from exc
    residual = np.abs(pi @ Q).max()
    if residual > 1e-9 or np.any(pi <= 1e-12):
        raise NumericalError(
            f"no strictly positive stationary distribution (residual {residual:.2e}, "
            f"min component {pi.min():.2e}); the generator may be reducible"
        )
    return pi / pi.sum()
