"""Exact simulation of the step-kernel process and of its continuous limit.

The step-kernel model is sampled without rejection: within one constancy
segment the hidden chain jump and the next event are competing exponential
clocks, and the segment boundary is deterministic.  Whichever of the three
fires first is realized; memorylessness makes the redraw after a boundary or
chain jump exact.  The continuous-kernel variant combines exact chain clocks
with thinning, using the left-endpoint intensity of the decreasing kernel as
the dominating rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import EventSequence, ModelParams


@dataclass(frozen=True)
class SimulationResult:
    events: EventSequence
    hidden_times: np.ndarray    # chain transition times, starting at 0.0
    hidden_states: np.ndarray   # 0-based state entered at each transition time
    seed: int
    params: ModelParams

    def state_at(self, t) -> np.ndarray:
        """Hidden state at arbitrary times (right-continuous path)."""
        idx = np.searchsorted(self.hidden_times, np.asarray(t, dtype=float), side="right") - 1
        return self.hidden_states[np.maximum(idx, 0)]

    def occupancy(self) -> np.ndarray:
        """Fraction of calendar time spent in each state over [0, horizon]."""
        M = self.params.M
        bounds = np.concatenate((self.hidden_times, [self.events.horizon]))
        lengths = np.diff(bounds)
        occ = np.bincount(self.hidden_states, weights=lengths, minlength=M)
        return occ / occ.sum()


def _resolve_stop(n_events, horizon):
    if (n_events is None) == (horizon is None):
        raise ValueError("specify exactly one of n_events or horizon")
    if n_events is not None and n_events < 1:
        raise ValueError("n_events must be >= 1")
    if horizon is not None and not horizon > 0:
        raise ValueError("horizon must be positive")


def simulate_mmhp_delta(params: ModelParams, n_events: int = None,
                        horizon: float = None, seed: int = 0) -> SimulationResult:
    """Draw one path of the step-kernel process by competing exponential clocks."""
    _resolve_stop(n_events, horizon)
    rng = np.random.default_rng(seed)
    M = params.M
    delta = params.delta
    q_exit = params.exit_rates
    state = int(rng.choice(M, p=params.xi0))
    S = np.zeros(M)           # decay accumulators anchored at the last event
    anchor = 0.0
    k = 0                     # current grid step since the anchor
    t = 0.0
    events = []
    h_times = [0.0]
    h_states = [state]
    while True:
        lam = params.mu[state] + params.alpha[state] * math.exp(
            -params.beta[state] * k * delta) * S[state]
        boundary = anchor + (k + 1) * delta
        jump_wait = rng.exponential(1.0 / q_exit[state]) if q_exit[state] > 0 else math.inf
        event_wait = rng.exponential(1.0 / lam)
        wait = min(jump_wait, event_wait)
        if t + wait >= boundary:
            t = boundary
            k += 1
            if horizon is not None and t >= horizon:
                break
            continue
        t = t + wait
        if horizon is not None and t > horizon:
            break
        if event_wait <= jump_wait:
            events.append(t)
            S = S * np.exp(-params.beta * (t - anchor)) + 1.0
            anchor = t
            k = 0
            if n_events is not None and len(events) >= n_events:
                break
        else:
            p = params.Q[state].clip(min=0.0)
            p[state] = 0.0
            state = int(rng.choice(M, p=p / p.sum()))
            h_times.append(t)
            h_states.append(state)
    if not events:
        raise RuntimeError("no event occurred before the horizon; extend it")
    T = float(events[-1]) if n_events is not None else float(horizon)
    keep = np.asarray(h_times) <= T
    return SimulationResult(
        events=EventSequence(np.asarray(events), horizon=T),
        hidden_times=np.asarray(h_times)[keep],
        hidden_states=np.asarray(h_states, dtype=np.int64)[keep],
        seed=seed, params=params,
    )


def simulate_mmhp_continuous(params: ModelParams, n_events: int = None,
                             horizon: float = None, seed: int = 0) -> SimulationResult:
    """Draw one path of the continuous-kernel process by thinning.

    Between structure points the active intensity decreases, so the value at
    the left endpoint dominates; proposals are accepted with probability
    lambda(t) / lambda_bar and the bound tightens after every rejection.
    """
    _resolve_stop(n_events, horizon)
    rng = np.random.default_rng(seed)
    M = params.M
    q_exit = params.exit_rates
    state = int(rng.choice(M, p=params.xi0))
    S = np.zeros(M)           # sum of exp(-beta_i (t_ref - t_l)) over past events
    t_ref = 0.0
    t = 0.0
    events = []
    h_times = [0.0]
    h_states = [state]

    def lam_at(s: int, at: float) -> float:
        return params.mu[s] + params.alpha[s] * S[s] * math.exp(-params.beta[s] * (at - t_ref))

    while True:
        lam_bar = lam_at(state, t)
        jump_wait = rng.exponential(1.0 / q_exit[state]) if q_exit[state] > 0 else math.inf
        prop_wait = rng.exponential(1.0 / lam_bar)
        if jump_wait < prop_wait:
            t = t + jump_wait
            if horizon is not None and t > horizon:
                break
            p = params.Q[state].clip(min=0.0)
            p[state] = 0.0
            state = int(rng.choice(M, p=p / p.sum()))
            h_times.append(t)
            h_states.append(state)
            continue
        t = t + prop_wait
        if horizon is not None and t > horizon:
            break
        lam_t = lam_at(state, t)
        assert lam_t <= lam_bar * (1 + 1e-12), "thinning bound violated"
        if rng.uniform() <= lam_t / lam_bar:
            S = S * np.exp(-params.beta * (t - t_ref))
            S = S + 1.0
            t_ref = t
            events.append(t)
            if n_events is not None and len(events) >= n_events:
                break
    if not events:
        raise RuntimeError("no event occurred before the horizon; extend it")
    T = float(events[-1]) if n_events is not None else float(horizon)
    keep = np.asarray(h_times) <= T
    return SimulationResult(
        events=EventSequence(np.asarray(events), horizon=T),
        hidden_times=np.asarray(h_times)[keep],
        hidden_states=np.asarray(h_states, dtype=np.int64)[keep],
        seed=seed, params=params,
    )
