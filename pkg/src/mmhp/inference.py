"""Scaled forward-backward recursions and the E-step sufficient statistics.

The forward row vectors L(n) and backward column vectors R(n) are normalized
per interval by the scaling factors c_n, so the log-likelihood is
sum(log c_n) and no unscaled product ever appears.  The posterior occupancy,
transition-count and intensity-integral expectations are assembled from the
upper-right blocks of block-exponential (Van Loan) integrals, one per delta
segment plus one per residual.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError
from .matexp import vanloan_batch
from .model import EventSequence, ModelParams
from .transition import TransitionBundle


@dataclass
class EStepCache:
    """Theta-hat-fixed weights reused by the numerical M-step.

    g_seg[g, i] and g_res[n, i] are the diagonal Van Loan block entries divided
    by the interval scaling c_n; the expected intensity integral of any trial
    parameter set is sum(lambda_trial * g) over segments and residuals.
    """

    g_seg: np.ndarray
    g_res: np.ndarray


@dataclass
class InferenceState:
    """Outputs of one forward-backward sweep plus E-step expectations."""

    c: np.ndarray                  # (K,) scaling factors
    L: np.ndarray                  # (K+1, M) scaled forward rows, L[0] = xi0
    R: np.ndarray                  # (K+2, M) scaled backward columns, R[K+1] = 1
    loglik: float
    smoothed: np.ndarray           # (K, M) posterior state distribution at event times
    ED: np.ndarray = None          # (M,) expected state occupancy, seconds
    EW: np.ndarray = None          # (M, M) expected transition counts, zero diagonal
    EIntLambda: np.ndarray = None  # (M,) int_0^T smoothed_i * lambda_i dt
    tau: np.ndarray = None         # (K,) compensator increments
    cache: EStepCache = field(default=None, repr=False)

    def filtered(self, n: int) -> np.ndarray:
        """Filtered state distribution after n events (n = 0 gives xi0)."""
        return self.L[n].copy()


def forward_backward(params: ModelParams, events: EventSequence,
                     bundle: TransitionBundle = None) -> InferenceState:
    """Run the scaled forward and backward recursions over all K intervals."""
    if bundle is None:
        bundle = TransitionBundle(params, events)
    K, M = events.K, params.M
    f = bundle.f
    c = np.empty(K)
    L = np.empty((K + 1, M))
    L[0] = params.xi0
    for n in range(K):
        v = L[n] @ f[n]
        c[n] = v.sum()
        if not np.isfinite(c[n]) or c[n] <= 0.0:
            raise NumericalError(
                f"forward scaling factor degenerated at interval {n} (c={c[n]!r})"
            )
        L[n + 1] = v / c[n]
    R = np.empty((K + 2, M))
    R[K + 1] = 1.0
    for n in range(K, 0, -1):
        R[n] = (f[n - 1] @ R[n + 1]) / c[n - 1]
    loglik = float(np.log(c).sum())
    smoothed = L[1:] * R[2:]
    return InferenceState(c=c, L=L, R=R, loglik=loglik, smoothed=smoothed)


def filtered_probabilities(inf: InferenceState, n: int) -> np.ndarray:
    """Filtered state distribution after n events; the scaled forward row itself."""
    return inf.filtered(n)


def estep_statistics(params: ModelParams, events: EventSequence,
                     bundle: TransitionBundle, inf: InferenceState) -> InferenceState:
    """Fill the expectation-step statistics (ED, EW, EIntLambda, tau) in place.

    For each delta segment the coupling block is
    suffix * P * prefix with P = Lambda(t_n-) R(n+1) L(n-1); the residual uses
    P * Xi_full.  The upper-right block of the associated block exponential,
    scaled by 1/c_n, accumulates into every expectation.
    """
    g = bundle.grid
    K, M = events.K, params.M
    # P[n] = Lambda(t_n-) R(n+2 in array indexing) L(n)
    P = bundle.lam_res[:, :, None] * (inf.R[2:, :, None] * inf.L[:K, None, :])

    if g.n_segments:
        PXi = P[g.seg_interval] @ bundle.prefix
        W_seg = bundle.suffix @ PXi
        B_seg = vanloan_batch(bundle.A_seg, W_seg, np.full(g.n_segments, g.delta))
    else:
        B_seg = np.empty((0, M, M))
    W_res = P @ bundle.Xi_full
    B_res = vanloan_batch(bundle.A_res, W_res, g.res)

    inv_c_seg = 1.0 / inf.c[g.seg_interval]
    inv_c = 1.0 / inf.c
    Bsum = np.einsum("gij,g->ij", B_seg, inv_c_seg) + np.einsum("nij,n->ij", B_res, inv_c)

    ED = np.diag(Bsum).copy()
    EW = params.Q * Bsum.T
    np.fill_diagonal(EW, 0.0)
    EW = np.maximum(EW, 0.0)

    g_seg = B_seg.diagonal(axis1=1, axis2=2) * inv_c_seg[:, None]
    g_res = B_res.diagonal(axis1=1, axis2=2) * inv_c[:, None]
    seg_contrib = (bundle.lam_seg * g_seg).sum(axis=1) if g.n_segments else np.zeros(0)
    res_contrib = (bundle.lam_res * g_res).sum(axis=1)
    tau = np.bincount(g.seg_interval, weights=seg_contrib, minlength=K) + res_contrib
    EIntLambda = (bundle.lam_seg * g_seg).sum(axis=0) + (bundle.lam_res * g_res).sum(axis=0)

    inf.ED = ED
    inf.EW = EW
    inf.EIntLambda = EIntLambda
    inf.tau = tau
    inf.cache = EStepCache(g_seg=g_seg, g_res=g_res)
    return inf
