"""Hidden-state reconstruction: log-domain Viterbi, batch and streaming.

The batch decoder maximizes prod_n H_{s_{n-1} s_n}(x_n) lambda_{s_n}(t_n-)
by dynamic programming on log scores.  The streaming decoder keeps only the
current score vector; between events it composes no-event transition factors
over the open interval anchored at the last event, and renormalizes by the
running maximum after every update (shift invariance keeps every argmax).

States are 0-based throughout the library; serialization adds 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DecodeError
from .matexp import expm_batch
from .model import EventSequence, ModelParams, exp_decay_accumulator
from .transition import TransitionBundle


@dataclass
class ViterbiTrace:
    log_eta: np.ndarray   # (K, M) log path scores
    psi: np.ndarray       # (K, M) backpointers; row 0 is a zero sentinel
    states: np.ndarray    # (K,) optimal state sequence, 0-based

    @property
    def filtered_states(self) -> np.ndarray:
        """argmax of log_eta per event: the best current state before backtracking."""
        return self.log_eta.argmax(axis=1)


def viterbi(params: ModelParams, events: EventSequence,
            bundle: TransitionBundle = None) -> ViterbiTrace:
    """Most likely hidden-state sequence at event times, exact in log domain."""
    if bundle is None:
        bundle = TransitionBundle(params, events)
    K, M = events.K, params.M
    with np.errstate(divide="ignore"):
        log_lam = np.log(np.maximum(bundle.lam_res, 1e-300))
        log_xi0 = np.log(params.xi0)
        log_H = np.log(bundle.H_full)
    log_eta = np.empty((K, M))
    psi = np.zeros((K, M), dtype=np.int64)
    prev = log_xi0
    for n in range(K):
        scores = prev[:, None] + log_H[n]
        best = scores.max(axis=0)
        if np.all(np.isneginf(best)):
            raise DecodeError(f"all path scores vanished at interval {n}")
        psi[n] = scores.argmax(axis=0)
        log_eta[n] = best + log_lam[n]
        prev = log_eta[n]
    psi[0] = 0
    states = np.empty(K, dtype=np.int64)
    states[K - 1] = int(log_eta[K - 1].argmax())
    for n in range(K - 2, -1, -1):
        states[n] = psi[n + 1][states[n + 1]]
    return ViterbiTrace(log_eta=log_eta, psi=psi, states=states)


class OnlineDecoder:
    """Streaming most-likely-state tracker; one decoder per event stream.

    Construct with an optional warm-up history (decoded in batch), then call
    :meth:`advance` at arbitrary times and :meth:`observe_event` at event
    arrivals.  Both return the current best state.

    Scores stay anchored at the last event; between events the no-event
    transition factors are composed into one pending matrix product, so the
    reported state at a time does not depend on how often the decoder was
    advanced on the way there.
    """

    def __init__(self, params: ModelParams, history: EventSequence = None):
        self.params = params
        self.M = params.M
        self.delta = params.delta
        if history is None or history.K == 0:
            with np.errstate(divide="ignore"):
                self.log_eta_event = np.log(params.xi0)
            self.anchor = 0.0
            self.t = 0.0
            self.n_events = 0
            self.S = np.zeros(self.M)
        else:
            trace = viterbi(params, history)
            self.log_eta_event = trace.log_eta[-1] - trace.log_eta[-1].max()
            self.anchor = float(history.times[-1])
            self.t = self.anchor
            self.n_events = history.K
            self.S = np.column_stack(
                [exp_decay_accumulator(history.times, float(b)) for b in params.beta]
            )[-1] * np.exp(-params.beta * (history.times[-1] - history.anchor(history.K - 1))) + 1.0
        self.log_eta = self.log_eta_event.copy()
        self._pending = None      # composed no-event product over (anchor, t]
        self._pending_logc = 0.0  # accumulated renormalization of the product
        self._segment_cache = {}

    @property
    def state(self) -> int:
        return int(self.log_eta.argmax())

    def _lam(self, k: int) -> np.ndarray:
        p = self.params
        return p.mu + p.alpha * np.exp(-p.beta * k * self.delta) * self.S

    def _segment_exp(self, k: int) -> np.ndarray:
        E = self._segment_cache.get(k)
        if E is None:
            A = self.params.Q - np.diag(self._lam(k))
            E = expm_batch(A * self.delta)
            self._segment_cache[k] = E
        return E

    def _transition_factors(self, u: float, v: float, cap: int = None):
        """Segment exponentials covering (anchor+u, anchor+v], right-folded later.

        ``cap`` marks the residual step of a closing interval: positions at or
        beyond cap*delta belong to one segment frozen at step cap, matching
        the batch grid decomposition of the same interval.
        """
        if v <= u:
            return []
        k_u = int(u / self.delta)
        k_v = int(v / self.delta)
        if cap is not None:
            k_u = min(k_u, cap)
            k_v = min(k_v, cap)
        if k_u == k_v:
            A = self.params.Q - np.diag(self._lam(k_u))
            return [expm_batch(A * (v - u))]
        factors = []
        A = self.params.Q - np.diag(self._lam(k_u))
        factors.append(expm_batch(A * ((k_u + 1) * self.delta - u)))
        for k in range(k_u + 1, k_v):
            factors.append(self._segment_exp(k))
        if v > k_v * self.delta:
            A = self.params.Q - np.diag(self._lam(k_v))
            factors.append(expm_batch(A * (v - k_v * self.delta)))
        return factors

    def _fold(self, factors) -> np.ndarray:
        """Right-associated product, matching the batch bundle's segment scans."""
        prod = np.eye(self.M)
        for F in reversed(factors):
            prod = F @ prod
        return prod

    def _compose(self, factors) -> np.ndarray:
        """Pending no-event product extended by new factors (right fold if fresh)."""
        if self._pending is None:
            return self._fold(factors) if factors else None
        P = self._pending
        for F in factors:
            P = P @ F
        return P

    def advance(self, now: float) -> int:
        """Compose the no-event transition over (t, now] and report the best state."""
        if now < self.t:
            raise ValueError(f"time regression: {now} < {self.t}")
        if now > self.t:
            P = self._compose(self._transition_factors(self.t - self.anchor,
                                                       now - self.anchor))
            scale = P.max()
            if not scale > 0:
                raise DecodeError(f"no-event transition vanished at t={now}")
            self._pending = P / scale
            self._pending_logc += float(np.log(scale))
            self.t = now
            with np.errstate(divide="ignore"):
                scores = self.log_eta_event[:, None] + np.log(self._pending)
            best = scores.max(axis=0) + self._pending_logc
            self.log_eta = best - best.max()
        return self.state

    def observe_event(self, t_event: float) -> int:
        """Score an event arrival at t_event and re-anchor the kernel grid."""
        if t_event < self.t:
            raise ValueError(f"time regression: {t_event} < {self.t}")
        x = t_event - self.anchor
        k_res = max(int(math.floor(x / self.delta - 1e-9)), 0)
        lam_event = self._lam(k_res)
        factors = self._transition_factors(self.t - self.anchor, x, cap=k_res)
        T = self._compose(factors)
        with np.errstate(divide="ignore"):
            log_T = (np.log(T) + self._pending_logc if T is not None
                     else np.log(np.eye(self.M)))
            scores = self.log_eta_event[:, None] + log_T
            best = scores.max(axis=0)
            if np.all(np.isneginf(best)):
                raise DecodeError(f"all path scores vanished at event t={t_event}")
            new = best + np.log(np.maximum(lam_event, 1e-300))
        self.log_eta_event = new - new.max()
        self.log_eta = self.log_eta_event.copy()
        self._pending = None
        self._pending_logc = 0.0
        self.S = self.S * np.exp(-self.params.beta * x) + 1.0
        self.anchor = t_event
        self.t = t_event
        self.n_events += 1
        self._segment_cache = {}
        return self.state


def online_init(params: ModelParams, history: EventSequence = None) -> OnlineDecoder:
    return OnlineDecoder(params, history)


def online_advance(decoder: OnlineDecoder, now: float) -> int:
    return decoder.advance(now)


def online_event(decoder: OnlineDecoder, t_event: float) -> int:
    return decoder.observe_event(t_event)
