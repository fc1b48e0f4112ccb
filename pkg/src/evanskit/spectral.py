"""First-order spectral ODE systems along a radiative shock profile.

After transforming the resolvent equations to characteristic coordinates,
the unknown W = (v, q1, p1) with v = T^{-1} u satisfies a singular linear
system (Theta(x1) W)' = Abb(x1, lambda, xi_t) W whose leading matrix Theta
loses rank where the distinguished characteristic speed crosses zero.  This
module assembles that system, computes end-state eigenmode structure and
stable/unstable dimension counts, integrates decaying/growing mode bases
inward from the end states with continuous renormalization, and constructs
the fast vanishing mode inside the collar around the sonic point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (
    BasisDegeneracy,
    CenterEigenvalue,
    EigenbasisFailure,
    IllConditionedDiagonalizer,
    NoFastDirection,
)
from .kernel import CoeffTable, propagate_block
from .models import ModelSystem
from .profile import Profile

_COND_LIMIT = 1e6
_CENTER_TOL = 1e-12
_LAMBDA_FLOOR = 1e-8
_RHO_SLOW_MIN = 1e-6       # slow columns are unresolved below this radius
_ALPHA_FLOOR = 1e-3        # required real part of the collar decay rate
_COLLAR_MAX = 0.5          # outer edge of the sonic collar
_X_INNER_DEFAULT = 1.0     # innermost evaluation point for regular bases


# ---------------------------------------------------------------------------
# spectral parameter
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectralPoint:
    """One (lambda, transverse frequency) evaluation point.

    rho is the Euclidean modulus of the pair and zhat its direction
    (components: Re lambda, Im lambda, transverse frequencies).  theta1 is
    the opening rate of the parabolic contour Re lambda =
    -theta1 (|xi_t|^2 + (Im lambda)^2); inside_contour records whether the
    point lies on or to the right of it.
    """

    lam: complex
    xi_t: np.ndarray
    theta1: float = 0.1
    rho: float = field(init=False)
    zhat: np.ndarray = field(init=False)
    inside_contour: bool = field(init=False)

    def __post_init__(self):
        lam = complex(self.lam)
        xi = np.atleast_1d(np.asarray(self.xi_t, dtype=float))
        if xi.ndim != 1:
            raise ValueError("xi_t must be a 1-d frequency vector")
        rho = math.sqrt(abs(lam) ** 2 + float(xi @ xi))
        vec = np.concatenate([[lam.real, lam.imag], xi])
        if rho > 0:
            zhat = vec / rho
        else:
            zhat = np.zeros_like(vec)
            zhat[0] = 1.0              # conventional direction at the origin
        inside = lam.real >= -self.theta1 * (float(xi @ xi) + lam.imag ** 2) \
            - 1e-15
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "xi_t", xi)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "zhat", zhat)
        object.__setattr__(self, "inside_contour", bool(inside))

    @property
    def xi_norm_sq(self) -> float:
        return float(self.xi_t @ self.xi_t)

    def conjugate(self) -> "SpectralPoint":
        return SpectralPoint(np.conj(self.lam), -self.xi_t, self.theta1)


# ---------------------------------------------------------------------------
# assembled system at one x1
# ---------------------------------------------------------------------------


@dataclass
class SystemMatrices:
    """The singular linear system at one point: (Theta W)' = Abb W."""

    Theta: np.ndarray          # (n+2, n+2) real, diag(A1-tilde, 1, 1)
    Abb: np.ndarray            # (n+2, n+2) complex
    T: np.ndarray              # (n, n) diagonalizer of df1 at this point
    a_p: float                 # distinguished diagonal speed
    cond_T: float


def _phase_normalize(vecs: np.ndarray) -> np.ndarray:
    """Unit columns whose largest-magnitude entry is real and positive.

    The convention commutes with complex conjugation, which makes mode
    bases at conjugated parameters literal conjugates of each other.
    """
    out = np.array(vecs, dtype=complex)
    for j in range(out.shape[1]):
        col = out[:, j]
        nrm = np.linalg.norm(col)
        if nrm == 0:
            raise EigenbasisFailure("zero eigenvector column")
        col = col / nrm
        k = int(np.argmax(np.abs(col)))
        piv = col[k]
        out[:, j] = col * (np.conj(piv) / abs(piv))
    return out


def _real_eig_ascending(A1: np.ndarray):
    """Real-sorted eigen-decomposition of a strictly hyperbolic Jacobian."""
    w, V = np.linalg.eig(A1)
    scale = max(1.0, np.abs(w).max())
    if np.abs(w.imag).max() > 1e-9 * scale:
        raise EigenbasisFailure(
            f"normal Jacobian has non-real eigenvalues {w}")
    order = np.argsort(w.real)
    w = w.real[order]
    V = V[:, order].real.astype(float)
    V /= np.linalg.norm(V, axis=0)
    for j in range(V.shape[1]):
        k = int(np.argmax(np.abs(V[:, j])))
        if V[k, j] < 0:
            V[:, j] = -V[:, j]
    return w, V


class _CoefficientFields:
    """Grid-sampled, smoothly ordered coefficient fields of one profile.

    All x1-dependent ingredients of the system are sampled on the profile
    grid once (diagonalizer T, its inverse's derivative, transformed
    transverse Jacobians, coupling vectors) and interpolated with cubic
    splines, so that pointwise assembly and the integration tables evaluate
    the identical coefficient functions.
    """

    def __init__(self, model: ModelSystem, profile: Profile):
        grid = profile.grid
        n, d = model.n, model.d
        N = len(grid)
        T = np.empty((N, n, n))
        Tinv = np.empty((N, n, n))
        atil = np.empty((N, n))
        A1s = np.empty((N, n, n))
        Atrans = np.empty((d - 1, N, n, n))
        Ltil = np.empty((N, n))
        Btil = np.empty((N, n))

        prev = None
        for i in range(N):
            u = profile.U[i]
            A1 = model.df(0, u)
            w, V = _real_eig_ascending(A1)
            if prev is not None:
                # continue the eigenvector field smoothly: match columns to
                # the previous node by largest overlap, then align signs
                ov = np.abs(prev.T @ V)
                perm = np.empty(n, dtype=int)
                used = np.zeros(n, dtype=bool)
                for _ in range(n):
                    k, j = np.unravel_index(np.argmax(ov), ov.shape)
                    perm[k] = j
                    used[j] = True
                    ov[k, :] = -1.0
                    ov[:, j] = -1.0
                w, V = w[perm], V[:, perm]
                for j in range(n):
                    if prev[:, j] @ V[:, j] < 0:
                        V[:, j] = -V[:, j]
            prev = V
            T[i] = V
            Tinv[i] = np.linalg.inv(V)
            atil[i] = w
            A1s[i] = A1
            for j in range(1, d):
                Atrans[j - 1, i] = Tinv[i] @ model.df(j, u) @ V
            Ltil[i] = Tinv[i] @ model.L
            Btil[i] = model.dg(u) @ V

        # derivative fields are the exact derivatives of the interpolants,
        # not re-differenced samples: the integration tables spline the
        # same node values, so only this choice keeps the assembled system
        # and the integrated dynamics consistent below the 1e-7 residual
        # contract (finite differencing leaves an O(h^2) disagreement)
        sp_atil = CubicSpline(grid, atil, axis=0)
        sp_Tinv = CubicSpline(grid, Tinv, axis=0)

        self.model = model
        self.profile = profile
        self.n = n
        self.p = profile.p
        self.grid = grid
        self._sp = {
            "T": CubicSpline(grid, T, axis=0),
            "Tinv": sp_Tinv,
            "atil": sp_atil,
            "datil": sp_atil.derivative(),
            "dTinv": sp_Tinv.derivative(),
            "A1": CubicSpline(grid, A1s, axis=0),
            "Ltil": CubicSpline(grid, Ltil, axis=0),
            "Btil": CubicSpline(grid, Btil, axis=0),
            "Atrans": CubicSpline(grid, np.moveaxis(Atrans, 0, 1), axis=0),
        }

    def eval(self, name, x):
        if name == "dTinvA1T":
            return self._sp["dTinv"](x) @ self._sp["A1"](x) @ self._sp["T"](x)
        return self._sp[name](x)

    def transverse_sum(self, x, xi_t):
        """sum_j xi_j * (transformed transverse Jacobian j) at x."""
        At = self._sp["Atrans"](x)          # (d-1, n, n) or (nx, d-1, n, n)
        return np.tensordot(xi_t, At, axes=(0, -3))

    def lambda_free(self, x, xi_t):
        """System matrix with the -lambda I_n rows removed and the
        Theta-derivative absorbed, i.e. the N of Theta W' = (N - lam S) W."""
        n = self.n
        s2 = float(np.dot(xi_t, xi_t))
        out = np.zeros((n + 2, n + 2), dtype=complex)
        out[:n, :n] = -(1j * self.transverse_sum(x, xi_t)
                        + np.outer(self.eval("Ltil", x),
                                   self.eval("Btil", x))
                        - self.eval("dTinvA1T", x))
        out[:n, :n] -= np.diag(self.eval("datil", x))
        out[:n, n + 1] = self.eval("Ltil", x) / (1.0 + s2)
        out[n, :n] = self.eval("Btil", x)
        out[n, n + 1] = -1.0
        out[n + 1, n] = -(1.0 + s2)
        return out

    def theta_diag(self, x):
        return np.concatenate([self.eval("atil", x), [1.0, 1.0]])

    def coeff_table(self, xi_t, x_lo, x_hi, xs=None) -> CoeffTable:
        if xs is None:
            inner = self.grid[(self.grid > x_lo + 1e-9)
                              & (self.grid < x_hi - 1e-9)]
            xs = np.concatenate([[x_lo], inner, [x_hi]])
        xs = np.asarray(xs, dtype=float)
        m = self.n + 2
        Ns = np.empty((len(xs), m, m), dtype=complex)
        ds = np.empty((len(xs), m))
        for i, x in enumerate(xs):
            Ns[i] = self.lambda_free(x, xi_t)
            ds[i] = self.theta_diag(x)
        return CoeffTable(xs, Ns, ds, n_lam=self.n)


def _fields(model: ModelSystem, profile: Profile) -> _CoefficientFields:
    cache = getattr(profile, "_spectral_fields", None)
    if cache is None or cache.model is not model:
        cache = _CoefficientFields(model, profile)
        profile._spectral_fields = cache
    return cache


def coefficient_table(model: ModelSystem, profile: Profile, xi_t,
                      x_lo: float, x_hi: float, xs=None) -> CoeffTable:
    """Integration table of the lambda-free system over [x_lo, x_hi].

    The sample points default to the profile grid restricted to the span;
    the table must not straddle the singular point, where the leading
    diagonal vanishes.
    """
    xi_t = np.atleast_1d(np.asarray(xi_t, dtype=float))
    return _fields(model, profile).coeff_table(xi_t, x_lo, x_hi, xs=xs)


def assemble_system(model: ModelSystem, profile: Profile, x1: float,
                    pt: SpectralPoint) -> SystemMatrices:
    """Evaluate Theta and the full system matrix at one interior point."""
    grid = profile.grid
    if not grid[0] <= x1 <= grid[-1]:
        raise ValueError(f"x1={x1} outside profile grid "
                         f"[{grid[0]}, {grid[-1]}]")
    fl = _fields(model, profile)
    n = model.n
    s2 = pt.xi_norm_sq
    atil = fl.eval("atil", x1)
    T = fl.eval("T", x1)
    cond_T = float(np.linalg.cond(T))
    if cond_T > _COND_LIMIT:
        raise IllConditionedDiagonalizer(
            f"diagonalizer condition number {cond_T:.3g} at x1={x1}")

    Abb = np.zeros((n + 2, n + 2), dtype=complex)
    Abb[:n, :n] = -(pt.lam * np.eye(n)
                    + 1j * fl.transverse_sum(x1, pt.xi_t)
                    + np.outer(fl.eval("Ltil", x1), fl.eval("Btil", x1))
                    - fl.eval("dTinvA1T", x1))
    Abb[:n, n + 1] = fl.eval("Ltil", x1) / (1.0 + s2)
    Abb[n, :n] = fl.eval("Btil", x1)
    Abb[n, n + 1] = -1.0
    Abb[n + 1, n] = -(1.0 + s2)

    Theta = np.zeros((n + 2, n + 2))
    Theta[:n, :n] = np.diag(atil)
    Theta[n, n] = 1.0
    Theta[n + 1, n + 1] = 1.0
    return SystemMatrices(Theta=Theta, Abb=Abb, T=T,
                          a_p=float(atil[fl.p - 1]), cond_T=cond_T)


# ---------------------------------------------------------------------------
# end-state eigenmode structure
# ---------------------------------------------------------------------------


def _end_state_matrices(model: ModelSystem, u):
    atil, T = _real_eig_ascending(model.df(0, u))
    Tinv = np.linalg.inv(T)
    return atil, T, Tinv


def asymptotic_modes(model: ModelSystem, shock, side: str,
                     pt: SpectralPoint) -> dict:
    """Eigenvalues/eigenvectors of the constant-coefficient end-state system.

    Returns eigenvalues sorted by (real, imaginary) part, the matching
    phase-normalized eigenvector columns, dims = (#growing, #decaying)
    counted by the sign of the real part, and the leading-order slow
    eigenvalue predictors used for fast/slow classification.
    """
    if side not in ("plus", "minus"):
        raise ValueError(f"side must be 'plus' or 'minus', got {side!r}")
    u = shock.u_plus if side == "plus" else shock.u_minus
    n = model.n
    s2 = pt.xi_norm_sq
    atil, T, Tinv = _end_state_matrices(model, u)
    Ltil = Tinv @ model.L
    Btil = model.dg(u) @ T
    Axi = np.zeros((n, n))
    for j in range(1, model.d):
        Axi = Axi + pt.xi_t[j - 1] * (Tinv @ model.df(j, u) @ T)

    M = np.zeros((n + 2, n + 2), dtype=complex)
    core = pt.lam * np.eye(n) + 1j * Axi + np.outer(Ltil, Btil)
    M[:n, :n] = -core / atil[:, None]
    M[:n, n + 1] = Ltil / atil / (1.0 + s2)
    M[n, :n] = Btil
    M[n, n + 1] = -1.0
    M[n + 1, n] = -(1.0 + s2)

    w, V = np.linalg.eig(M)
    order = np.lexsort((w.imag, w.real))
    w, V = w[order], _phase_normalize(V[:, order])

    if pt.lam.real > _LAMBDA_FLOOR and np.abs(w.real).min() < _CENTER_TOL:
        raise CenterEigenvalue(
            f"eigenvalue with |Re| < {_CENTER_TOL} at Re lambda = "
            f"{pt.lam.real:.3g}: {w}")

    dim_u = int(np.sum(w.real > 0))
    dim_s = int(np.sum(w.real < 0))
    if pt.lam.real > _LAMBDA_FLOOR:
        if dim_u + dim_s != n + 2:
            raise EigenbasisFailure(
                f"stable/unstable split {dim_u}+{dim_s} != {n + 2}")
        p = shock.p
        if p is not None:
            want = (p + 1, n - p + 1) if side == "plus" else (p, n - p + 2)
            if (dim_u, dim_s) != want:
                raise EigenbasisFailure(
                    f"dimension count {(dim_u, dim_s)} does not match the "
                    f"expected {want} on side {side}")

    # leading-order slow eigenvalues: spectrum of the transport block alone
    slow0 = np.linalg.eigvals(
        -(pt.lam * np.eye(n) + 1j * Axi) / atil[:, None])
    slow0 = slow0[np.lexsort((slow0.imag, slow0.real))]
    return {"eigenvalues": w, "eigenvectors": V, "dims": (dim_u, dim_s),
            "mu_slow0": slow0, "T": T}


def _classify_fast_slow(w: np.ndarray, slow0: np.ndarray) -> list:
    """Tag each eigenvalue 'slow' (nearest the transport predictors) or
    'fast'; exactly two are fast."""
    n = len(slow0)
    dist = np.abs(w[:, None] - slow0[None, :])
    kinds = ["fast"] * len(w)
    taken = np.zeros(len(slow0), dtype=bool)
    flat = [(dist[i, j], i, j) for i in range(len(w)) for j in range(n)]
    flat.sort()
    assigned = 0
    chosen = np.zeros(len(w), dtype=bool)
    for _, i, j in flat:
        if assigned == n:
            break
        if chosen[i] or taken[j]:
            continue
        kinds[i] = "slow"
        chosen[i] = True
        taken[j] = True
        assigned += 1
    return kinds


# ---------------------------------------------------------------------------
# integrated mode bases
# ---------------------------------------------------------------------------


@dataclass
class ModeBasis:
    """An orthonormalized block of solutions sampled along the path.

    columns[i] is an orthonormal frame at xs[i] obtained by successive
    QR factorizations (positive real diagonal), so every column is itself
    a solution — a triangular recombination of the seeded ones — and
    span(columns[i][:, :j]) equals the span of the continuations of the
    first j seeds.  log_scale[i, j] accumulates the log of the j-th QR
    diagonal entry: the determinant of the block of true continuations at
    xs[i] is det(columns[i]) * exp(sum(log_scale[i])).
    """

    side: str
    xs: np.ndarray                 # (ns,) sample points, integration order
    columns: np.ndarray            # (ns, n+2, k) orthonormal frames
    log_scale: np.ndarray          # (ns, k) real, accumulated QR exponents
    mu: np.ndarray                 # (k,) asymptotic eigenvalue per seed
    kind: list                     # per column: fast / slow / singular-fast
    x_match: float
    alpha: complex | None = None       # collar decay coefficient
    alpha_hat: float | None = None     # measured vanishing exponent

    @property
    def k(self) -> int:
        return self.columns.shape[2]

    @property
    def frame(self) -> np.ndarray:
        """Orthonormal frame at x_match (the final sample)."""
        return self.columns[-1]

    def value(self, j: int, i: int = -1) -> np.ndarray:
        """Column j at sample i scaled back to true magnitude (may
        overflow for extreme log scales; prefer columns/log_scale)."""
        return self.columns[i, :, j] * math.exp(self.log_scale[i, j])


def _qr_pos(block):
    """QR with positive real diagonal; the convention is conjugation-
    equivariant and makes the factorization unique for full-rank input."""
    Q, R = np.linalg.qr(block)
    d = np.diag(R)
    if np.any(np.abs(d) < 1e-300):
        raise BasisDegeneracy("orthonormalization rank drop in mode basis")
    phase = d / np.abs(d)
    return Q * phase[None, :].conj(), np.abs(d)


def _propagate_sampled(table, lam, W0, checkpoints, rtol, atol):
    """Carry a block through successive checkpoints with continuous
    orthonormalization, recording the frame and accumulated per-column
    log scales at each."""
    m, k = W0.shape
    frames = np.empty((len(checkpoints), m, k), dtype=complex)
    lss = np.empty((len(checkpoints), k))
    Q, diag = _qr_pos(W0)
    ls = np.log(diag)
    frames[0], lss[0] = Q, ls
    for i in range(1, len(checkpoints)):
        res = propagate_block(table, lam, Q, checkpoints[i - 1],
                              checkpoints[i], rtol=rtol, atol=atol)
        Q, diag = _qr_pos(res.W @ res.M)
        ls = ls + res.logs + np.log(diag)
        frames[i], lss[i] = Q, ls
    return frames, lss


def integrate_modes(model: ModelSystem, profile: Profile, pt: SpectralPoint,
                    side: str, want: str, x_match: float, *,
                    x0_inner: float = _X_INNER_DEFAULT,
                    rtol: float = 1e-9, atol: float = 1e-12,
                    checkpoint_spacing: float = 2.0) -> ModeBasis:
    """Integrate the decaying or growing solution basis from one end state.

    Columns start at the outer grid edge on the chosen side, seeded with
    the end-state eigenvectors ordered so the fastest-growing one along the
    integration direction comes first, and are carried to x_match with
    continuous orthonormalization.  At rho = 0 only the fast pair is
    meaningful, so slow columns are dropped there; small nonzero radii
    below 1e-6 are rejected because the slow splitting is unresolved.
    """
    if want not in ("decaying", "growing"):
        raise ValueError(f"want must be 'decaying' or 'growing', got {want!r}")
    if side not in ("plus", "minus"):
        raise ValueError(f"side must be 'plus' or 'minus', got {side!r}")
    sgn = 1.0 if side == "plus" else -1.0
    if x_match * sgn < x0_inner:
        raise ValueError(
            f"x_match={x_match} is on the wrong side of the collar for "
            f"side {side!r} (need |x_match| >= {x0_inner} with matching sign)")
    if 0 < pt.rho < _RHO_SLOW_MIN:
        raise ValueError(
            f"rho={pt.rho:.3g} too small to resolve slow modes; evaluate at "
            f"rho=0 (fast columns only) or rho >= {_RHO_SLOW_MIN}")

    am = asymptotic_modes(model, profile.shock, side, pt)
    w, V = am["eigenvalues"], am["eigenvectors"]
    kinds = _classify_fast_slow(w, am["mu_slow0"])

    decay_sign = -1.0 if side == "plus" else 1.0    # Re mu of decaying modes
    sel_sign = decay_sign if want == "decaying" else -decay_sign
    sel = [j for j in range(len(w)) if w[j].real * sel_sign > 0]
    if pt.rho == 0:
        sel = [j for j in sel if kinds[j] == "fast"]
    if not sel:
        raise EigenbasisFailure(
            f"no {want} columns on side {side} at this point")
    # integrating from +L runs against x, so the most negative Re mu grows
    # fastest; from -L the most positive does.  Dominant column first keeps
    # the nested Gram-Schmidt spans well conditioned.
    sel.sort(key=lambda j: (w[j].real, w[j].imag), reverse=(side == "minus"))

    start = profile.grid[-1] if side == "plus" else profile.grid[0]
    lo, hi = sorted((start, x_match))
    fl = _fields(model, profile)
    table = fl.coeff_table(pt.xi_t, lo, hi)

    n_cp = max(2, int(abs(start - x_match) / checkpoint_spacing) + 1)
    checkpoints = np.linspace(start, x_match, n_cp)
    # the end-state eigenvectors live in the coordinates of the end-state
    # diagonalizer; re-express them in the smoothly ordered grid field used
    # by the integration table (the two differ by column signs and the
    # residual distance of the grid edge from the true end state)
    n = model.n
    conv = np.eye(n + 2, dtype=complex)
    conv[:n, :n] = np.linalg.solve(fl.eval("T", start), am["T"])
    W0 = conv @ V[:, sel]
    frames, lss = _propagate_sampled(table, pt.lam, W0, checkpoints,
                                     rtol, atol)
    return ModeBasis(side=side, xs=checkpoints, columns=frames,
                     log_scale=lss, mu=w[sel],
                     kind=[kinds[j] for j in sel], x_match=x_match)


# ---------------------------------------------------------------------------
# fast modes in the sonic collar
# ---------------------------------------------------------------------------


def collar_decay_rate(model: ModelSystem, profile: Profile,
                      pt: SpectralPoint) -> complex:
    """Decay coefficient of the fast direction at the sonic point.

    In the time-like variable s with ds = dx1 / a_p(x1), the distinguished
    component obeys dv_p/ds = -alpha v_p + (vanishing corrections), where
    alpha is the p-th diagonal of the full zeroth-order balance including
    the Theta-derivative row.
    """
    fl = _fields(model, profile)
    x0 = profile.x_singular
    sysm = assemble_system(model, profile, x0, pt)
    ip = fl.p - 1
    return complex(fl.eval("datil", x0)[ip] - sysm.Abb[ip, ip])


def singular_modes(model: ModelSystem, profile: Profile, pt: SpectralPoint,
                   zero_side: str, x_match: float, *,
                   rtol: float = 1e-9, atol: float = 1e-12,
                   n_samples: int = 25) -> ModeBasis:
    """Construct the fast mode that vanishes into the sonic point.

    The mode is seeded on the fast subspace (the distinguished transport
    component) at an inner radius delta = 1e-3 * (profile decay length) and
    integrated outward to x_match; the measured vanishing exponent
    alpha_hat with |W| ~ |x1|^alpha_hat is fitted on the inner half of the
    sample points (log spacing).
    """
    if zero_side not in ("left", "right"):
        raise ValueError(
            f"zero_side must be 'left' or 'right', got {zero_side!r}")
    sgn = 1.0 if zero_side == "right" else -1.0
    if x_match * sgn <= 0:
        raise ValueError(f"x_match={x_match} not on the {zero_side} side")
    if abs(x_match) > _COLLAR_MAX:
        raise ValueError(
            f"|x_match|={abs(x_match)} outside the collar "
            f"(<= {_COLLAR_MAX})")
    if pt.rho > 0.5:
        raise ValueError(f"rho={pt.rho:.3g} too large for the collar "
                         "construction (<= 0.5)")

    alpha = collar_decay_rate(model, profile, pt)
    if alpha.real < _ALPHA_FLOOR:
        raise NoFastDirection(
            f"collar decay rate Re alpha = {alpha.real:.3g} below "
            f"{_ALPHA_FLOOR}; no fast vanishing direction")

    fl = _fields(model, profile)
    n = model.n
    delta = 1e-3 / profile.eta
    if delta >= abs(x_match):
        raise ValueError(
            f"x_match={x_match} inside the seeding radius {delta:.3g}")

    x0 = profile.x_singular
    radii = np.geomspace(delta, abs(x_match), n_samples)
    checkpoints = x0 + sgn * radii
    xs_tab = x0 + sgn * np.linspace(0.45 * delta, 1.02 * abs(x_match), 240)
    xs_tab = np.sort(xs_tab)
    table = fl.coeff_table(pt.xi_t, xs_tab[0], xs_tab[-1], xs=xs_tab)

    W0 = np.zeros((n + 2, 1), dtype=complex)
    W0[fl.p - 1, 0] = 1.0
    frames, lss = _propagate_sampled(table, pt.lam, W0, checkpoints,
                                     rtol, atol)

    # vanishing exponent from the inner (well-linearized) half of the collar
    logr = np.log(radii)
    mask = logr <= 0.5 * (logr[0] + logr[-1])
    slope = np.polyfit(logr[mask], lss[mask, 0], 1)[0]
    return ModeBasis(side=zero_side, xs=checkpoints, columns=frames,
                     log_scale=lss, mu=np.array([complex("nan")]),
                     kind=["singular-fast"], x_match=x_match,
                     alpha=alpha, alpha_hat=float(slope))


# ---------------------------------------------------------------------------
# debugging artifact
# ---------------------------------------------------------------------------


def write_modes_csv(basis: ModeBasis, path) -> None:
    """CSV columns: x1, then per column j its component real/imaginary
    parts and log scale."""
    m, k = basis.columns.shape[1], basis.k
    header = ["x1"]
    for j in range(k):
        for c in range(m):
            header += [f"w{j + 1}_{c + 1}_re", f"w{j + 1}_{c + 1}_im"]
        header.append(f"w{j + 1}_logscale")
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(len(basis.xs)):
            row = [basis.xs[i]]
            for j in range(k):
                for c in range(m):
                    row += [basis.columns[i, c, j].real,
                            basis.columns[i, c, j].imag]
                row.append(basis.log_scale[i, j])
            fh.write(",".join(f"{v:.12g}" for v in row) + "\n")
