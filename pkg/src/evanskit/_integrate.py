"""Pure-numpy backend for stiff mode-block propagation.

Integrates column blocks of the linear system

    Theta(x) W' = (N(x) - lam * S) W,      S = diag(I_n, 0, 0),

where Theta is diagonal and both N and the Theta diagonal are piecewise
cubics sampled from splines.  Adaptive Dormand-Prince 4(5) steps; whenever
the column norms leave [1e-2, 1e2] the frame is re-orthonormalized by a
positive-diagonal QR and the mixing matrix/per-column log scales absorb
the growth, so that

    true_column_j(x) = W(x) @ M[:, j] * exp(logs[j])

holds exactly at all times.  The compiled extension (evanskit._core)
implements the same contract; this module is the always-available
fallback and the reference for its behavior.
"""

import numpy as np

STATUS_OK = 0
STATUS_STEP_COLLAPSE = 1
STATUS_NON_FINITE = 2
STATUS_RANK_DROP = 3

_NORM_HI = 1e2
_NORM_LO = 1e-2
_ORTH_EVERY = 1000          # forced re-orthonormalization cadence

# Dormand-Prince coefficients
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1 / 5, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3 / 40, 9 / 40, 0.0, 0.0, 0.0, 0.0],
    [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0, 0.0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0, 0.0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0.0],
])
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920,
               -17253 / 339200, 22 / 525, -1 / 40])


def _interval(bp, x):
    """Index i with bp[i] <= x < bp[i+1], clamped to valid segments."""
    i = int(np.searchsorted(bp, x, side="right")) - 1
    return min(max(i, 0), len(bp) - 2)


def _eval_cubic(coef, t):
    """Horner evaluation of spline coefficients (4, ...) at local offset t."""
    out = coef[0].copy()
    for j in range(1, 4):
        out *= t
        out += coef[j]
    return out


def _rhs(bp, cN, cd, n_lam, lam, x, W):
    i = _interval(bp, x)
    t = x - bp[i]
    N = _eval_cubic(cN[i], t)
    d = _eval_cubic(cd[i], t)
    Y = N @ W
    Y[:n_lam] -= lam * W[:n_lam]
    return Y / d[:, None]


def _renorm(W, M, logs):
    """QR with positive real diagonal; absorb growth into (M, logs)."""
    Q, R = np.linalg.qr(W)
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-290 or diag.min() < 1e-15 * max(diag.max(), 1.0):
        return W, M, logs, False
    phase = np.diag(R) / diag
    Q = Q * phase[None, :]
    R = phase.conj()[:, None] * R
    M = R @ M
    norms = np.linalg.norm(M, axis=0)
    if norms.min() <= 0.0:
        return W, M, logs, False
    M = M / norms[None, :]
    logs = logs + np.log(norms)
    return Q, M, logs, True


def integrate_segment(bp, cN, cd, n_lam, lam, W, M, logs,
                      x_from, x_to, rtol, atol, max_steps):
    """Advance one segment; returns (W, M, logs, status, steps, nfev, renorms)."""
    W = np.array(W, dtype=complex)
    M = np.array(M, dtype=complex)
    logs = np.array(logs, dtype=float)
    if x_to == x_from:
        return W, M, logs, STATUS_OK, 0, 0, 0

    direction = 1.0 if x_to > x_from else -1.0
    span = abs(x_to - x_from)
    x = x_from
    k_stage = np.empty((7,) + W.shape, dtype=complex)
    k_stage[0] = _rhs(bp, cN, cd, n_lam, lam, x, W)
    nfev = 1

    # first-step heuristic from the local rate
    rate = np.linalg.norm(k_stage[0]) / max(np.linalg.norm(W), 1e-300)
    h = direction * min(span, 0.1 / max(rate, 1e-3))

    steps = 0
    renorms = 0
    since_orth = 0
    while (x_to - x) * direction > 0:
        if steps >= max_steps:
            return W, M, logs, STATUS_STEP_COLLAPSE, steps, nfev, renorms
        if abs(h) < 1e-14 * max(1.0, abs(x)):
            return W, M, logs, STATUS_STEP_COLLAPSE, steps, nfev, renorms
        if (x + h - x_to) * direction > 0:
            h = x_to - x

        for s in range(1, 7):
            Ws = W + h * np.tensordot(_A[s, :s] if s < 6 else _B,
                                      k_stage[:s if s < 6 else 6], axes=(0, 0))
            k_stage[s] = _rhs(bp, cN, cd, n_lam, lam, x + _C[s] * h, Ws)
        nfev += 6
        W_new = Ws                    # stage 7 state uses the 5th-order weights
        err = h * np.tensordot(_E, k_stage, axes=(0, 0))
        if not (np.isfinite(W_new).all() and np.isfinite(err).all()):
            return W, M, logs, STATUS_NON_FINITE, steps, nfev, renorms

        scale = atol + rtol * np.maximum(np.abs(W), np.abs(W_new))
        err_norm = np.sqrt(np.mean(np.abs(err / scale) ** 2))
        if err_norm <= 1.0:
            x = x + h
            W = W_new
            k_stage[0] = k_stage[6]   # FSAL
            steps += 1
            since_orth += 1
            norms = np.linalg.norm(W, axis=0)
            if (norms.max() > _NORM_HI or norms.min() < _NORM_LO
                    or since_orth >= _ORTH_EVERY):
                W, M, logs, ok = _renorm(W, M, logs)
                if not ok:
                    return W, M, logs, STATUS_RANK_DROP, steps, nfev, renorms
                k_stage[0] = _rhs(bp, cN, cd, n_lam, lam, x, W)
                nfev += 1
                renorms += 1
                since_orth = 0
        factor = 0.9 * err_norm ** -0.2 if err_norm > 0 else 5.0
        h = h * min(5.0, max(0.2, factor))
    return W, M, logs, STATUS_OK, steps, nfev, renorms
