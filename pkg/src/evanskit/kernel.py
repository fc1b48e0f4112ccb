"""Mode-block propagation kernel with compiled/fallback backend selection.

The hot loop of every Evans-function and resolvent evaluation is the
propagation of small complex column blocks through the stiff linear
system Theta(x) W' = (N(x) - lam*S) W.  A Cython extension
(evanskit._core) carries that loop when it was built; otherwise the
numpy implementation in evanskit._integrate takes over with identical
semantics.  Set EVANSKIT_DISABLE_EXT=1 to force the fallback (used by
the benchmark and the equivalence tests).
"""

import os
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import BasisDegeneracy, NonFinite, StiffnessFailure
from . import _integrate as _py

_core = None
if not os.environ.get("EVANSKIT_DISABLE_EXT"):
    try:
        from . import _core
    except ImportError:
        _core = None

HAVE_EXT = _core is not None


def backend_name(use_ext=None):
    if use_ext is None:
        use_ext = HAVE_EXT
    return "compiled" if (use_ext and HAVE_EXT) else "python"


class CoeffTable:
    """Piecewise-cubic samples of N(x) and the Theta diagonal.

    Built once per (profile, transverse frequency); evaluation inside the
    integrator works directly on the spline coefficient arrays, so no
    Python-level callback runs in the hot loop.  `n_lam` is the number of
    leading rows on which the spectral parameter acts.
    """

    def __init__(self, xs, N_samples, d_samples, n_lam):
        xs = np.asarray(xs, dtype=float)
        if xs.ndim != 1 or len(xs) < 4:
            raise ValueError("need at least 4 sample points")
        if np.any(np.diff(xs) <= 0):
            raise ValueError("sample points must increase strictly")
        N_samples = np.asarray(N_samples, dtype=complex)
        d_samples = np.asarray(d_samples, dtype=float)
        m = N_samples.shape[1]
        if N_samples.shape != (len(xs), m, m):
            raise ValueError("N_samples must be (len(xs), m, m)")
        if d_samples.shape != (len(xs), m):
            raise ValueError("d_samples must be (len(xs), m)")
        if not 0 <= n_lam <= m:
            raise ValueError("n_lam out of range")
        self.m = m
        self.n_lam = int(n_lam)
        self.bp = xs
        sN = CubicSpline(xs, N_samples, axis=0)
        sd = CubicSpline(xs, d_samples, axis=0)
        # (nseg, 4, ...) contiguous, highest Horner coefficient first
        self.cN = np.ascontiguousarray(np.swapaxes(sN.c, 0, 1),
                                       dtype=complex)
        self.cd = np.ascontiguousarray(np.swapaxes(sd.c, 0, 1),
                                       dtype=float)

    def N(self, x):
        i = _py._interval(self.bp, x)
        return _py._eval_cubic(self.cN[i], x - self.bp[i])

    def theta_diag(self, x):
        i = _py._interval(self.bp, x)
        return _py._eval_cubic(self.cd[i], x - self.bp[i])

    @property
    def x_min(self):
        return float(self.bp[0])

    @property
    def x_max(self):
        return float(self.bp[-1])


@dataclass
class PropagationResult:
    """Frame + bookkeeping so column j of the true solution is
    W @ M[:, j] * exp(logs[j])."""

    W: np.ndarray
    M: np.ndarray
    logs: np.ndarray
    x: float
    steps: int
    nfev: int
    renorms: int
    backend: str

    def columns(self):
        """Reconstructed true columns (beware overflow for huge logs)."""
        return (self.W @ self.M) * np.exp(self.logs)[None, :]

    def column_log_norms(self):
        """log of each true column norm, safe for any log scale."""
        cols = self.W @ self.M
        return np.log(np.linalg.norm(cols, axis=0)) + self.logs


def propagate_block(table, lam, W0, x_from, x_to, *, rtol=1e-8, atol=1e-12,
                    M0=None, logs0=None, max_steps=200000, use_ext=None):
    """Propagate a column block from x_from to x_to (either direction)."""
    W0 = np.asarray(W0, dtype=complex)
    if W0.ndim == 1:
        W0 = W0[:, None]
    m, k = W0.shape
    if m != table.m:
        raise ValueError(f"block has {m} rows, table expects {table.m}")
    if k > m:
        raise ValueError("more columns than rows cannot stay independent")
    lo, hi = table.x_min, table.x_max
    for endpoint in (x_from, x_to):
        if endpoint < lo - 1e-9 or endpoint > hi + 1e-9:
            raise ValueError(f"x={endpoint} outside table range [{lo}, {hi}]")
    M0 = np.eye(k, dtype=complex) if M0 is None else \
        np.asarray(M0, dtype=complex)
    logs0 = np.zeros(k) if logs0 is None else np.asarray(logs0, dtype=float)

    if use_ext is None:
        use_ext = HAVE_EXT
    impl = _core if (use_ext and HAVE_EXT) else _py
    W, M, logs, status, steps, nfev, renorms = impl.integrate_segment(
        table.bp, table.cN, table.cd, table.n_lam, complex(lam),
        np.ascontiguousarray(W0), np.ascontiguousarray(M0), logs0,
        float(x_from), float(x_to), float(rtol), float(atol), int(max_steps))

    if status == _py.STATUS_STEP_COLLAPSE:
        raise StiffnessFailure(
            f"step size collapsed after {steps} steps at x~{x_from}->{x_to}")
    if status == _py.STATUS_NON_FINITE:
        raise NonFinite("propagation produced NaN or Inf")
    if status == _py.STATUS_RANK_DROP:
        raise BasisDegeneracy("QR renormalization lost rank")
    return PropagationResult(W=W, M=M, logs=logs, x=float(x_to), steps=steps,
                             nfev=nfev, renorms=renorms,
                             backend=backend_name(use_ext))
