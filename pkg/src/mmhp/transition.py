"""Per-interval transition matrices built from products of segment exponentials.

Within interval n the generator-minus-intensity matrix is constant on each
delta step, so the forward transition matrix is a product of segment
exponentials E_k = exp((Q - Lambda_k) * delta) closed by a residual factor.
The bundle materializes, for every interval at once:

  * E_seg / E_res      : the segment and residual exponentials,
  * prefix[g]          : Xi_k = E_0 ... E_{k-1} at flat slot g = offset(n) + k,
  * suffix[g]          : E_{k+1} ... E_{l-1} E_res at the same slot,
  * Xi_full[n]         : Xi_{l_n},
  * H_full[n]          : the full forward matrix H(x_n) = Xi_{l_n} E_res,
  * f[n]               : the duration density matrix H(x_n) Lambda(t_n-).

The two scans run batched across intervals, longest interval first.
"""

from __future__ import annotations

import math

import numpy as np

from .matexp import expm_batch
from .model import EventSequence, IntervalGrid, ModelParams, PiecewiseIntensity


class TransitionBundle:

    def __init__(self, params: ModelParams, events: EventSequence,
                 grid: IntervalGrid = None, intensity: PiecewiseIntensity = None):
        self.params = params
        self.events = events
        self.grid = grid if grid is not None else IntervalGrid(events, params.delta)
        g = self.grid
        if intensity is None:
            intensity = PiecewiseIntensity(params, events, g)
        self.intensity = intensity
        self.lam_seg, self.lam_res = intensity.segment_values()

        M, K = params.M, events.K
        eye = np.eye(M)
        A_seg = params.Q - eye * self.lam_seg[:, :, None]
        A_res = params.Q - eye * self.lam_res[:, :, None]
        self.A_seg = A_seg
        self.A_res = A_res
        self.E_seg = expm_batch(A_seg * g.delta) if g.n_segments else np.empty((0, M, M))
        self.E_res = expm_batch(A_res * g.res[:, None, None])

        # forward scan: prefix[off+k] = Xi_k, Xi_full[n] = Xi_{ell_n}
        prefix = np.empty((g.n_segments, M, M))
        run = np.broadcast_to(eye, (K, M, M)).copy()
        for j in range(g.max_ell):
            act = g.active(j)
            pos = g.offsets[act] + j
            prefix[pos] = run[act]
            run[act] = run[act] @ self.E_seg[pos]
        self.prefix = prefix
        self.Xi_full = run

        # backward scan: suffix[off+k] = E_{k+1} ... E_{ell-1} E_res
        suffix = np.empty((g.n_segments, M, M))
        run = self.E_res.copy()
        for j in range(g.max_ell - 1, -1, -1):
            act = g.active(j)
            pos = g.offsets[act] + j
            suffix[pos] = run[act]
            run[act] = self.E_seg[pos] @ run[act]
        self.suffix = suffix
        self.H_full = run

        self.f = self.H_full * self.lam_res[:, None, :]

    @property
    def K(self) -> int:
        return self.events.K

    def _check_interval(self, n: int) -> float:
        if not 0 <= n < self.K:
            raise IndexError(f"interval index {n} out of range")
        return float(self.grid.x[n])

    def _segment_matrix(self, n: int, k: int) -> np.ndarray:
        """A = Q - Lambda on step k of interval n (k = ell[n] is the residual)."""
        if k == self.grid.ell[n]:
            return self.A_res[n]
        return self.A_seg[self.grid.offsets[n] + k]

    def H(self, n: int, u: float) -> np.ndarray:
        """Forward transition matrix over (t_{n-1}, t_{n-1} + u], 0 <= u <= x_n."""
        x_n = self._check_interval(n)
        if not 0 <= u <= x_n * (1 + 1e-12):
            raise ValueError(f"u={u} outside [0, {x_n}]")
        if u >= x_n:
            return self.H_full[n].copy()
        delta = self.grid.delta
        ell_n = int(self.grid.ell[n])
        k = min(int(u / delta), ell_n)
        rem = u - k * delta
        Xi_k = self.Xi_full[n] if k == ell_n else self.prefix[self.grid.offsets[n] + k]
        return Xi_k @ expm_batch(self._segment_matrix(n, k) * rem)

    def G(self, n: int, u: float) -> np.ndarray:
        """Backward transition matrix over (t_n - u, t_n], 0 <= u <= x_n."""
        x_n = self._check_interval(n)
        if not 0 <= u <= x_n * (1 + 1e-12):
            raise ValueError(f"u={u} outside [0, {x_n}]")
        res = float(self.grid.res[n])
        if u <= res:
            return expm_batch(self.A_res[n] * u)
        # j = index of the segment containing t_n - u, crossed partially;
        # the epsilon guard keeps float noise at segment boundaries from
        # spilling r past the interval's step count
        r = min(max(math.ceil((u - res) / self.grid.delta - 1e-9), 1),
                int(self.grid.ell[n]))
        j = int(self.grid.ell[n]) - r
        partial = u - res - (r - 1) * self.grid.delta
        tail = self.suffix[self.grid.offsets[n] + j]  # E_{j+1} ... E_res
        return expm_batch(self.A_seg[self.grid.offsets[n] + j] * partial) @ tail

    def density(self, n: int) -> np.ndarray:
        """Duration density matrix f(x_n) = H(x_n) Lambda(t_n-)."""
        self._check_interval(n)
        return self.f[n].copy()

    def intra_R(self, n: int, u: float, v: float) -> np.ndarray:
        """No-event transition matrix over (t_{n-1}+u, t_{n-1}+v], 0 <= u <= v <= x_n.

        Computed as the direct product of the segment exponentials covering the
        span (never by inverting H, whose entries underflow on long intervals).
        """
        x_n = self._check_interval(n)
        if not 0 <= u <= v <= x_n * (1 + 1e-12):
            raise ValueError(f"(u, v)=({u}, {v}) outside 0 <= u <= v <= {x_n}")
        delta = self.grid.delta
        ell_n = int(self.grid.ell[n])
        k_u = min(int(u / delta), ell_n)
        k_v = min(int(v / delta), ell_n)
        if k_u == k_v:
            return expm_batch(self._segment_matrix(n, k_u) * (v - u))
        boundary_u = min((k_u + 1) * delta, x_n)
        R = expm_batch(self._segment_matrix(n, k_u) * (boundary_u - u))
        off = self.grid.offsets[n]
        for k in range(k_u + 1, k_v):
            R = R @ self.E_seg[off + k]
        last_start = k_v * delta
        if v > last_start:
            R = R @ expm_batch(self._segment_matrix(n, k_v) * (v - last_start))
        return R


def build_bundle(params: ModelParams, events: EventSequence,
                 grid: IntervalGrid = None,
                 intensity: PiecewiseIntensity = None) -> TransitionBundle:
    return TransitionBundle(params, events, grid, intensity)


def forward_H(params: ModelParams, events: EventSequence, n: int, u: float) -> np.ndarray:
    return TransitionBundle(params, events).H(n, u)


def backward_G(params: ModelParams, events: EventSequence, n: int, u: float) -> np.ndarray:
    return TransitionBundle(params, events).G(n, u)


def density_f(params: ModelParams, events: EventSequence, n: int) -> np.ndarray:
    return TransitionBundle(params, events).density(n)


def intra_R(params: ModelParams, events: EventSequence, n: int, u: float, v: float) -> np.ndarray:
    return TransitionBundle(params, events).intra_R(n, u, v)
