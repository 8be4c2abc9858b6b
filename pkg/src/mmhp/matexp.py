"""Dense matrix exponentials and block-exponential integrals.

expm uses degree-13 Pade approximation with 1-norm scaling and squaring,
vectorized over stacks of small matrices (everything here is at most 2M x 2M
with M <= 10).  The coupled integral

    int_0^dt exp(A (dt - x)) W exp(A x) dx

is read off as the upper-right block of exp([[A, W], [0, A]] * dt).
"""

from __future__ import annotations

import numpy as np

from .model import EventSequence, IntervalGrid, ModelParams, PiecewiseIntensity

_PADE13 = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0, 670442572800.0,
    33522128640.0, 1323241920.0, 40840800.0, 960960.0, 16380.0, 182.0, 1.0,
)
_THETA13 = 5.371920351148152


def expm_batch(A: np.ndarray) -> np.ndarray:
    """Matrix exponential of a stack of square matrices, shape (..., d, d)."""
    A = np.asarray(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ValueError("expected a stack of square matrices")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix entries must be finite")
    stack_shape = A.shape[:-2]
    d = A.shape[-1]
    A = A.reshape(-1, d, d)
    norm1 = np.abs(A).sum(axis=-2).max(axis=-1)
    with np.errstate(divide="ignore"):
        s = np.ceil(np.log2(norm1 / _THETA13))
    s = np.where(np.isfinite(s) & (s > 0), s, 0.0).astype(np.int64)
    As = A * np.exp2(-s.astype(float))[:, None, None]

    ident = np.broadcast_to(np.eye(d), As.shape)
    b = _PADE13
    A2 = As @ As
    A4 = A2 @ A2
    A6 = A2 @ A4
    U = As @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
              + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident)
    V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
         + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident)
    F = np.linalg.solve(V - U, V + U)
    for step in range(int(s.max()) if s.size else 0):
        todo = s > step
        F[todo] = F[todo] @ F[todo]
    return F.reshape(*stack_shape, d, d)


def expm(A: np.ndarray, t: float = 1.0) -> np.ndarray:
    """exp(A * t) for a single square matrix."""
    A = np.asarray(A, dtype=float)
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    return expm_batch(A * t)


def vanloan_upper_right(A: np.ndarray, W: np.ndarray, dt: float) -> np.ndarray:
    """int_0^dt exp(A (dt - x)) W exp(A x) dx via the block-exponential trick."""
    A = np.asarray(A, dtype=float)
    W = np.asarray(W, dtype=float)
    d = A.shape[-1]
    block = np.zeros(A.shape[:-2] + (2 * d, 2 * d))
    block[..., :d, :d] = A
    block[..., :d, d:] = W
    block[..., d:, d:] = A
    return expm_batch(block * dt)[..., :d, d:]


def vanloan_batch(A: np.ndarray, W: np.ndarray, dt: np.ndarray) -> np.ndarray:
    """Batched coupled integrals: A, W of shape (B, d, d), dt of shape (B,)."""
    A = np.asarray(A, dtype=float)
    W = np.asarray(W, dtype=float)
    dt = np.asarray(dt, dtype=float)
    B, d = A.shape[0], A.shape[-1]
    block = np.zeros((B, 2 * d, 2 * d))
    block[:, :d, :d] = A
    block[:, :d, d:] = W
    block[:, d:, d:] = A
    block *= dt[:, None, None]
    return expm_batch(block)[:, :d, d:]


def _rk4_segment(Y: np.ndarray, A: np.ndarray, length: float, max_step: float,
                 forward: bool) -> np.ndarray:
    """Propagate Y through a constant-coefficient segment with classical RK4.

    forward=True integrates dY/du = Y A (right multiplication), forward=False
    integrates dY/du = A Y.  One RK4 step of size h on a linear autonomous
    system multiplies by the degree-4 Taylor polynomial of exp(h A).
    """
    if length <= 0:
        return Y
    n_steps = max(int(np.ceil(length / max_step)), 1)
    h = length / n_steps
    hA = h * A
    P = np.eye(A.shape[0]) + hA + hA @ hA / 2 + hA @ hA @ hA / 6 + hA @ hA @ hA @ hA / 24
    P = np.linalg.matrix_power(P, n_steps)
    return Y @ P if forward else P @ Y


def ode_oracle_H(params: ModelParams, events: EventSequence, n: int,
                 substeps: int = 1000) -> np.ndarray:
    """Forward transition matrix of interval n by segment-aligned RK4 integration.

    Independent cross-check for the closed-form product of segment
    exponentials; integrates dH/du = H (Q - Lambda(u)) at step delta/substeps.
    """
    grid = IntervalGrid(events, params.delta)
    lam = PiecewiseIntensity(params, events, grid)
    max_step = params.delta / substeps
    H = np.eye(params.M)
    for k in range(int(grid.ell[n])):
        A = params.Q - np.diag(lam.at(n, k))
        H = _rk4_segment(H, A, params.delta, max_step, forward=True)
    A = params.Q - np.diag(lam.at_event(n))
    return _rk4_segment(H, A, float(grid.res[n]), max_step, forward=True)


def ode_oracle_G(params: ModelParams, events: EventSequence, n: int,
                 substeps: int = 1000) -> np.ndarray:
    """Backward transition matrix of interval n by segment-aligned RK4 integration.

    Integrates dG/du = (Q - Lambda(t_n - u)) G from the right end of the
    interval; segments are traversed residual first, then in reverse order.
    """
    grid = IntervalGrid(events, params.delta)
    lam = PiecewiseIntensity(params, events, grid)
    max_step = params.delta / substeps
    G = np.eye(params.M)
    A = params.Q - np.diag(lam.at_event(n))
    G = _rk4_segment(G, A, float(grid.res[n]), max_step, forward=False)
    for k in range(int(grid.ell[n]) - 1, -1, -1):
        A = params.Q - np.diag(lam.at(n, k))
        G = _rk4_segment(G, A, params.delta, max_step, forward=False)
    return G
