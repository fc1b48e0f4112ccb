"""Radiative shock profile solver.

Solves the standing-wave system in its once-integrated form

    f1(U) + L Q1 = f1(u_-),        -Q1'' + Q1 + (g(U))' = 0,

on a uniform grid: the first integral holds at every node, the elliptic
equation at interior nodes (fourth-order stencil away from the ends), and
one projection condition per end kills the far-field mode that grows toward
the interior.

The first integral confines f1(U(x1)) to the straight line through f1(u_-)
with direction L.  The profile in state space therefore runs along the
preimage curve of that line, and its sonic crossing -- the point where the
crossing speed a_p(U) vanishes -- sits exactly at the fold of that curve,
where the line parameter (the value of Q1) turns around.  Both the fold
state u* and the turning value t* = Q1 at the fold are computable up front
by a small Newton solve, independent of the profile itself.

The solve is staged to exploit that.  First the two half-line problems are
solved separately with Dirichlet data (u*, t*) at the center: each half is
square (no slack, no phase condition) and every interior node stays pinned
to its own sheet of the fold curve, which removes the mixed-sheet impostor
solutions a glued system admits (the discrete first integral cannot tell
which preimage sheet a node sits on).  The glued composite then seeds a
bordered full-domain Newton polish: a phase row a_p(U(0)) = 0 pins the
translation family, and a scalar slack keeps the Jacobian square.  At a
genuine profile the slack converges to truncation scale; an O(1) slack
means the two halves do not join smoothly and is reported as failure.

The slack placement matters: the left near-null vector of the unbordered
system is the adjoint translation mode, which is O(1) in the layer and
exponentially small at the boundary rows, so the slack enters the center
elliptic row (a boundary row would pair the slack with a fast boundary-layer
solution and make the bordered matrix exactly singular).

The far-field linearization reduces exactly to a 2x2 saddle in (Q1, Q1'):
eliminating dU = -df1(u±)^{-1} L dQ1 gives mu^2 + beta mu - 1 = 0 with
beta = dg^T df1(u±)^{-1} L, whose roots have product -1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import null_space
from scipy.sparse import coo_matrix, csc_matrix
from scipy.sparse.linalg import splu

from .errors import (
    AmplitudeTooLarge,
    DegenerateSingularPoint,
    FitFailed,
    MultipleSingularPoints,
    NoConvergence,
)
from .models import ModelSystem, ShockData, normalize_shock

_END_TOL = 1e-8
_SLACK_TOL = 1e-5
_DAP_TOL = 1e-6

# one-sided 5-point first-derivative weights at the left end (O(h^4))
_ONESIDED = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0


def characteristic_speed(model: ModelSystem, u, p: int) -> float:
    """p-th smallest real normal characteristic speed at a state."""
    evals = np.linalg.eigvals(model.df(0, u))
    return float(np.sort(evals.real)[p - 1])


def _speed_gradient(model, u, p, h=1e-7):
    grad = np.empty(model.n)
    for k in range(model.n):
        up = np.array(u, float)
        um = np.array(u, float)
        up[k] += h
        um[k] -= h
        grad[k] = (characteristic_speed(model, up, p)
                   - characteristic_speed(model, um, p)) / (2 * h)
    return grad


def end_state_rates(model: ModelSystem, shock: ShockData):
    """Saddle exponents (mu_unstable, mu_stable) of the (Q1, Q1') reduction
    at each end state; keys 'minus' and 'plus'."""
    out = {}
    for key, u in (("minus", shock.u_minus), ("plus", shock.u_plus)):
        beta = float(model.dg(u) @ np.linalg.solve(model.df(0, u), model.L))
        disc = np.sqrt(beta * beta + 4.0)
        out[key] = ((-beta + disc) / 2.0, (-beta - disc) / 2.0)
    return out


class ProfileInterp:
    """Cubic accessors for off-node queries of the profile fields."""

    def __init__(self, grid, U, Q1):
        self._u = [CubicSpline(grid, U[:, k]) for k in range(U.shape[1])]
        self._du = [s.derivative() for s in self._u]
        self._q = CubicSpline(grid, Q1)
        self._dq = self._q.derivative()

    def U(self, x):
        return np.array([s(x) for s in self._u])

    def dU(self, x):
        return np.array([s(x) for s in self._du])

    def Q1(self, x):
        return float(self._q(x))

    def dQ1(self, x):
        return float(self._dq(x))


@dataclass
class Profile:
    """A computed standing radiative shock profile, singular point at x1=0."""

    grid: np.ndarray
    U: np.ndarray            # (nodes, n)
    Q1: np.ndarray           # (nodes,)
    dU: np.ndarray           # (nodes, n)
    eta: float
    x_singular: float
    dap0: float
    L_dom: float
    interp: ProfileInterp
    shock: ShockData
    model_name: str
    p: int
    h: float

    def ap(self, model: ModelSystem, x: float) -> float:
        return characteristic_speed(model, self.interp.U(x), self.p)


# ---------------------------------------------------------------------------
# discretization helpers
# ---------------------------------------------------------------------------


def _second_derivative_row(i, n_nodes, h):
    """(indices, weights) for Q1'' at interior node i."""
    if 2 <= i <= n_nodes - 3:
        idx = np.array([i - 2, i - 1, i, i + 1, i + 2])
        w = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / (12.0 * h * h)
    else:
        idx = np.array([i - 1, i, i + 1])
        w = np.array([1.0, -2.0, 1.0]) / (h * h)
    return idx, w


def _first_derivative_row(i, n_nodes, h):
    """(indices, weights) for d/dx at interior node i (for (g(U))')."""
    if 2 <= i <= n_nodes - 3:
        idx = np.array([i - 2, i - 1, i + 1, i + 2])
        w = np.array([1.0, -8.0, 8.0, -1.0]) / (12.0 * h)
    else:
        idx = np.array([i - 1, i + 1])
        w = np.array([-1.0, 1.0]) / (2.0 * h)
    return idx, w


def _boundary_derivative(n_nodes, h, side):
    """One-sided O(h^4) first-derivative stencil at an end node."""
    if side == "left":
        return np.arange(5), _ONESIDED / h
    return n_nodes - 1 - np.arange(5), -_ONESIDED / h


def _fd_derivative_columns(grid, values):
    """Fourth-order first derivative of node data (one-sided at the ends)."""
    h = grid[1] - grid[0]
    n_nodes = len(grid)
    out = np.zeros_like(values)
    v = values
    out[2:-2] = (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / (12 * h)
    left_idx, left_w = _boundary_derivative(n_nodes, h, "left")
    right_idx, right_w = _boundary_derivative(n_nodes, h, "right")
    for i in (0, 1):
        out[i] = sum(w * v[j + i] for j, w in zip(left_idx, left_w))
    for i in (0, 1):
        out[n_nodes - 1 - i] = sum(
            w * v[j - i] for j, w in zip(right_idx, right_w))
    return out


class _Discretization:
    """Residual and sparse Jacobian of the bordered profile system."""

    def __init__(self, model, shock, grid, p):
        self.model = model
        self.shock = shock
        self.grid = grid
        self.p = p
        self.h = grid[1] - grid[0]
        self.n = model.n
        self.n_nodes = len(grid)
        self.center = int(np.argmin(np.abs(grid)))
        if abs(grid[self.center]) > 1e-12:
            raise ValueError("grid must contain x1 = 0 as a node")
        self.f_target = model.f(0, shock.u_minus)
        rates = end_state_rates(model, shock)
        self.mu_u_plus = rates["plus"][0]
        self.mu_s_minus = rates["minus"][1]
        # unknown layout: per node [U (n), Q1], then the slack
        self.block = self.n + 1
        self.n_unknowns = self.block * self.n_nodes + 1

    def pack(self, U, Q1, c):
        x = np.empty(self.n_unknowns)
        x[:-1] = np.column_stack([U, Q1]).ravel()
        x[-1] = c
        return x

    def unpack(self, x):
        body = x[:-1].reshape(self.n_nodes, self.block)
        return body[:, :self.n], body[:, self.n], x[-1]

    # -- residual ----------------------------------------------------------

    def residual(self, x):
        model, n, nn = self.model, self.n, self.n_nodes
        U, Q1, c = self.unpack(x)
        res = np.empty(self.n_unknowns)
        g_vals = np.array([model.g(U[i]) for i in range(nn)])

        row = 0
        for i in range(nn):
            res[row:row + n] = model.f(0, U[i]) + model.L * Q1[i] - self.f_target
            row += n
            if i == 0:
                idx, w = _boundary_derivative(nn, self.h, "left")
                p0 = float(w @ Q1[idx])
                res[row] = Q1[0] + self.mu_s_minus * p0
            elif i == nn - 1:
                idx, w = _boundary_derivative(nn, self.h, "right")
                pn = float(w @ Q1[idx])
                res[row] = Q1[-1] + self.mu_u_plus * pn
            else:
                i2, w2 = _second_derivative_row(i, nn, self.h)
                i1, w1 = _first_derivative_row(i, nn, self.h)
                res[row] = -float(w2 @ Q1[i2]) + Q1[i] + float(w1 @ g_vals[i1])
                if i == self.center:
                    res[row] += c
            row += 1
        res[row] = characteristic_speed(model, U[self.center], self.p)
        return res

    # -- Jacobian ----------------------------------------------------------

    def jacobian(self, x):
        model, n, nn, blk = self.model, self.n, self.n_nodes, self.block
        U, Q1, _ = self.unpack(x)
        rows, cols, vals = [], [], []

        def put(r, c, v):
            rows.append(r)
            cols.append(c)
            vals.append(v)

        dg_vals = np.array([model.dg(U[i]) for i in range(nn)])
        row = 0
        for i in range(nn):
            col = blk * i
            df = model.df(0, U[i])
            for a in range(n):
                for b in range(n):
                    put(row + a, col + b, df[a, b])
                put(row + a, col + n, model.L[a])
            row += n
            if i == 0:
                idx, w = _boundary_derivative(nn, self.h, "left")
                put(row, n, 1.0)
                for j, wj in zip(idx, w):
                    put(row, blk * j + n, self.mu_s_minus * wj)
            elif i == nn - 1:
                idx, w = _boundary_derivative(nn, self.h, "right")
                put(row, blk * (nn - 1) + n, 1.0)
                for j, wj in zip(idx, w):
                    put(row, blk * j + n, self.mu_u_plus * wj)
            else:
                i2, w2 = _second_derivative_row(i, nn, self.h)
                for j, wj in zip(i2, w2):
                    put(row, blk * j + n, -wj)
                put(row, blk * i + n, 1.0)
                i1, w1 = _first_derivative_row(i, nn, self.h)
                for j, wj in zip(i1, w1):
                    for b in range(n):
                        put(row, blk * j + b, wj * dg_vals[j][b])
                if i == self.center:
                    put(row, self.n_unknowns - 1, 1.0)
            row += 1
        grad = _speed_gradient(model, U[self.center], self.p)
        for b in range(n):
            put(row, blk * self.center + b, grad[b])
        return csc_matrix(coo_matrix(
            (vals, (rows, cols)),
            shape=(self.n_unknowns, self.n_unknowns)))


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------


def _sonic_on_curve(model, shock, p):
    """Sonic state on the first-integral curve, or None.

    The first integral confines f_1(U(x1)) to the straight line through
    f_1(u_minus) with direction L, so the profile in state space runs along
    the preimage of that line.  Its crossing of the sonic set sits at the
    fold of that curve -- generally NOT on the straight segment between the
    end states.  Solved by Newton: (n-1) line-membership rows plus a_p = 0.
    """
    basis = null_space(model.L[None, :])          # n x (n-1), orthonormal
    f_minus = model.f(0, shock.u_minus)
    u = 0.5 * (shock.u_minus + shock.u_plus)
    for _ in range(30):
        try:
            res = np.concatenate([
                basis.T @ (model.f(0, u) - f_minus),
                [characteristic_speed(model, u, p)],
            ])
            if np.abs(res).max() < 1e-12:
                return u
            jac = np.vstack([basis.T @ model.df(0, u),
                             _speed_gradient(model, u, p)])
            u = u - np.linalg.solve(jac, res)
        except Exception:
            return None
    return None


def _trace_point(model, basis, f_minus, u_pred, u_prev, ds):
    """Project a predictor onto the first-integral curve at arc step ds."""
    u = u_pred.copy()
    for _ in range(50):
        res = np.concatenate([
            basis.T @ (model.f(0, u) - f_minus),
            [float((u - u_prev) @ (u - u_prev)) - ds * ds],
        ])
        if np.abs(res).max() < 1e-14:
            return u
        jac = np.vstack([basis.T @ model.df(0, u), 2.0 * (u - u_prev)])
        u = u - np.linalg.solve(jac, res)
    raise NoConvergence("first-integral curve tracing stalled")


def fold_data(model: ModelSystem, shock: ShockData) -> dict:
    """Local geometry of the sonic fold of the first-integral curve.

    Returns the fold state u_star, the Q1 value t_star there, the curvature
    kappa of the line parameter along the curve, the coupling slope dg.r1,
    the crossing discriminant (dg.r1)^2 + 4 kappa t_star, and -- when the
    discriminant is nonnegative -- the two crossing slopes sigma solving

        kappa sigma^2 - (dg.r1) sigma - t_star = 0,

    with "sigma" the physical one (smaller |kappa sigma|: the generic
    arrival direction of the funnel at the fold).  A negative discriminant
    means no smooth crossing exists: the profile would carry an embedded
    subshock at this amplitude.  For the scalar reference model the
    quadratic reduces to the classical smooth-profile condition with
    discriminant 1 - 2 eps^2.

    Expects the shock in standing form (speed zero): normalize it first.
    """
    if shock.p is None:
        raise NoConvergence("shock carries no Lax index; classify it first")
    model, shock = normalize_shock(model, shock)
    u_star = _sonic_on_curve(model, shock, shock.p)
    if u_star is None:
        raise NoConvergence(
            "no sonic fold found on the first-integral line near the shock")
    basis = null_space(model.L[None, :])
    f_minus = model.f(0, shock.u_minus)
    l2 = float(model.L @ model.L)
    t_star = float(model.L @ (f_minus - model.f(0, u_star))) / l2

    # kernel direction of df1 at the fold = right singular vector of the
    # (exactly) zero singular value
    _, _, vt = np.linalg.svd(model.df(0, u_star))
    r1 = vt[-1]
    if float(r1 @ (shock.u_plus - shock.u_minus)) < 0:
        r1 = -r1

    ds = max(1e-4, 0.02 * shock.amplitude)
    t_vals = {0: t_star}
    for direction in (-1.0, 1.0):
        prev = u_star
        tang = direction * r1
        for k in (1, 2):
            nxt = _trace_point(model, basis, f_minus, prev + ds * tang,
                               prev, ds)
            t_vals[int(direction) * k] = \
                float(model.L @ (f_minus - model.f(0, nxt))) / l2
            tang = (nxt - prev) / np.linalg.norm(nxt - prev)
            prev = nxt
    kappa = (-t_vals[-2] + 16 * t_vals[-1] - 30 * t_vals[0]
             + 16 * t_vals[1] - t_vals[2]) / (12.0 * ds * ds)
    dg_r1 = float(model.dg(u_star) @ r1)
    disc = dg_r1 * dg_r1 + 4.0 * kappa * t_star
    out = {
        "u_star": u_star, "t_star": t_star, "kappa": float(kappa),
        "dg_r1": dg_r1, "discriminant": float(disc), "r1": r1,
    }
    if disc >= 0:
        roots = np.array([(dg_r1 + np.sqrt(disc)) / (2.0 * kappa),
                          (dg_r1 - np.sqrt(disc)) / (2.0 * kappa)])
        phys = roots[np.argmin(np.abs(kappa * roots))]
        out["sigma"] = float(phys)
        out["sigma_other"] = float(roots[np.argmax(np.abs(kappa * roots))])
    return out


class _HalfDiscretization:
    """One half-line of the profile BVP with Dirichlet fold data at x1 = 0.

    The center node carries no unknowns: U and Q1 there are frozen at the
    fold values (u*, t*).  The system is square without any slack or phase
    condition -- the Dirichlet data kills the translation family -- and all
    interior nodes stay on one sheet of the first-integral fold curve.
    """

    def __init__(self, model, shock, grid, side, u_star, t_star):
        self.model = model
        self.shock = shock
        self.grid = grid                 # includes the center node
        self.side = side
        self.u_star = u_star
        self.t_star = t_star
        self.h = grid[1] - grid[0]
        self.n = model.n
        self.m = len(grid)
        self.fixed = self.m - 1 if side == "left" else 0
        self.f_target = model.f(0, shock.u_minus)
        rates = end_state_rates(model, shock)
        # rate of the far-field mode growing toward the interior, killed by
        # the projection row at the outer end
        self.mu = rates["minus"][1] if side == "left" else rates["plus"][0]
        self.block = self.n + 1
        self.n_unknowns = self.block * (self.m - 1)

    def expand(self, x):
        """Node arrays (U, Q1) over the full half-grid, fixed node included."""
        body = x.reshape(self.m - 1, self.block)
        U = np.empty((self.m, self.n))
        Q1 = np.empty(self.m)
        if self.side == "left":
            U[:-1] = body[:, :self.n]
            Q1[:-1] = body[:, self.n]
        else:
            U[1:] = body[:, :self.n]
            Q1[1:] = body[:, self.n]
        U[self.fixed] = self.u_star
        Q1[self.fixed] = self.t_star
        return U, Q1

    def _col(self, i):
        """Block column offset of node i, or None for the fixed node."""
        if i == self.fixed:
            return None
        return self.block * (i if self.side == "left" else i - 1)

    def residual(self, x):
        model, n, m = self.model, self.n, self.m
        U, Q1 = self.expand(x)
        g_vals = np.array([model.g(U[i]) for i in range(m)])
        res = np.empty(self.n_unknowns)
        row = 0
        for i in range(m):
            if i == self.fixed:
                continue
            res[row:row + n] = model.f(0, U[i]) + model.L * Q1[i] \
                - self.f_target
            row += n
            if i == 0:
                idx, w = _boundary_derivative(m, self.h, "left")
                res[row] = Q1[0] + self.mu * float(w @ Q1[idx])
            elif i == m - 1:
                idx, w = _boundary_derivative(m, self.h, "right")
                res[row] = Q1[-1] + self.mu * float(w @ Q1[idx])
            else:
                i2, w2 = _second_derivative_row(i, m, self.h)
                i1, w1 = _first_derivative_row(i, m, self.h)
                res[row] = -float(w2 @ Q1[i2]) + Q1[i] + float(w1 @ g_vals[i1])
            row += 1
        return res

    def jacobian(self, x):
        model, n, m = self.model, self.n, self.m
        U, Q1 = self.expand(x)
        rows, cols, vals = [], [], []

        def put(r, i, local, v):
            c = self._col(i)
            if c is not None:
                rows.append(r)
                cols.append(c + local)
                vals.append(v)

        dg_vals = np.array([model.dg(U[i]) for i in range(m)])
        row = 0
        for i in range(m):
            if i == self.fixed:
                continue
            df = model.df(0, U[i])
            for a in range(n):
                for b in range(n):
                    put(row + a, i, b, df[a, b])
                put(row + a, i, n, model.L[a])
            row += n
            if i == 0:
                idx, w = _boundary_derivative(m, self.h, "left")
                put(row, 0, n, 1.0)
                for j, wj in zip(idx, w):
                    put(row, j, n, self.mu * wj)
            elif i == m - 1:
                idx, w = _boundary_derivative(m, self.h, "right")
                put(row, m - 1, n, 1.0)
                for j, wj in zip(idx, w):
                    put(row, j, n, self.mu * wj)
            else:
                i2, w2 = _second_derivative_row(i, m, self.h)
                for j, wj in zip(i2, w2):
                    put(row, j, n, -wj)
                put(row, i, n, 1.0)
                i1, w1 = _first_derivative_row(i, m, self.h)
                for j, wj in zip(i1, w1):
                    for b in range(n):
                        put(row, j, b, wj * dg_vals[j][b])
            row += 1
        return csc_matrix(coo_matrix(
            (vals, (rows, cols)),
            shape=(self.n_unknowns, self.n_unknowns)))


def _half_guess(half):
    """Exponential tail from the end state to the fold, Q1 by least squares."""
    model, shock, grid = half.model, half.shock, half.grid
    rates = end_state_rates(model, shock)
    if half.side == "left":
        mu = rates["minus"][0]          # > 0: growth away from u_minus
        u_end = shock.u_minus
    else:
        mu = rates["plus"][1]           # < 0: decay toward u_plus
        u_end = shock.u_plus
    U = u_end[None, :] + np.exp(mu * grid)[:, None] \
        * (half.u_star - u_end)[None, :]
    l2 = float(model.L @ model.L)
    Q1 = np.array([
        float(model.L @ (half.f_target - model.f(0, U[i]))) / l2
        for i in range(half.m)
    ])
    body = np.column_stack([U, Q1])
    if half.side == "left":
        return body[:-1].ravel()
    return body[1:].ravel()


def _newton(disc, x0, tol, max_iter=60):
    x = x0.copy()
    res = disc.residual(x)
    norm = float(np.linalg.norm(res))
    for _ in range(max_iter):
        if np.linalg.norm(res, np.inf) < tol:
            return x
        delta = splu(disc.jacobian(x)).solve(-res)
        step = 1.0
        for _try in range(30):
            cand = x + step * delta
            try:
                cand_res = disc.residual(cand)
            except Exception:
                step *= 0.5
                continue
            cand_norm = float(np.linalg.norm(cand_res))
            if cand_norm < (1.0 - 0.25 * step) * norm or cand_norm < tol:
                x, res, norm = cand, cand_res, cand_norm
                break
            step *= 0.5
        else:
            raise NoConvergence(f"line search exhausted at |F| = {norm:.3e}")
    if np.linalg.norm(res, np.inf) < tol:
        return x
    raise NoConvergence(f"Newton stalled at |F| = {norm:.3e} after {max_iter} steps")


def _domain_hint(model, shock, amplitude):
    rates = end_state_rates(model, shock)
    eta_est = min(rates["plus"][0], -rates["plus"][1],
                  rates["minus"][0], -rates["minus"][1],
                  key=abs)
    eta_est = abs(eta_est)
    return 1.1 * np.log(max(amplitude, 1e-3) / 1e-9) / eta_est


def _make_grid(L_dom, h):
    half = int(np.ceil(L_dom / h))
    return h * np.arange(-half, half + 1), half * h


def solve_profile(model: ModelSystem, shock: ShockData, opts: dict = None) -> Profile:
    """Compute the standing shock profile for a validated small shock.

    opts keys: tol (default 1e-10), L_dom_hint, h (default 0.125),
    max_growth (default 5).
    """
    opts = dict(opts or {})
    tol = float(opts.get("tol", 1e-10))
    h = float(opts.get("h", 0.125))
    max_growth = int(opts.get("max_growth", 5))

    if shock.amplitude < 1e-10:
        raise AmplitudeTooLarge(
            "zero-amplitude shock: constant solution is degenerate")
    if shock.amplitude > 0.3 + 1e-12:
        raise AmplitudeTooLarge(
            f"amplitude {shock.amplitude:.3g} outside the small regime (max 0.3)")
    if shock.p is None:
        raise NoConvergence("shock carries no Lax index; classify it first")

    model, shock = normalize_shock(model, shock)
    fold = fold_data(model, shock)
    if fold["discriminant"] < 0:
        raise AmplitudeTooLarge(
            f"no smooth sonic crossing at amplitude {shock.amplitude:.3g}: "
            f"crossing discriminant {fold['discriminant']:.4f} < 0 "
            "(embedded-subshock regime)")
    u_star, t_star = fold["u_star"], fold["t_star"]

    L_dom = float(opts.get("L_dom_hint") or _domain_hint(model, shock,
                                                         shock.amplitude))
    last_exc = None
    for _ in range(max_growth):
        grid, L_dom = _make_grid(L_dom, h)
        c = int(np.argmin(np.abs(grid)))
        halves = []
        for side, part in (("left", grid[:c + 1]), ("right", grid[c:])):
            half = _HalfDiscretization(model, shock, part, side,
                                       u_star, t_star)
            halves.append(half.expand(_newton(half, _half_guess(half), tol)))
        (U_l, Q_l), (U_r, Q_r) = halves
        U0 = np.vstack([U_l, U_r[1:]])
        Q0 = np.concatenate([Q_l, Q_r[1:]])

        disc = _Discretization(model, shock, grid, shock.p)
        x = _newton(disc, disc.pack(U0, Q0, 0.0), tol)
        U, Q1, slack = disc.unpack(x)
        if abs(slack) > _SLACK_TOL:
            # an O(1) slack is a point source gluing two half-profiles that
            # do not join smoothly; a genuine profile leaves only
            # discretization-level residue in it
            raise NoConvergence(
                f"halves do not join smoothly: slack {slack:.3e} "
                f"exceeds {_SLACK_TOL}")
        end_err = max(np.abs(U[0] - shock.u_minus).max(),
                      np.abs(U[-1] - shock.u_plus).max(),
                      abs(Q1[0]), abs(Q1[-1]))
        if end_err < _END_TOL:
            return _finalize(model, shock, grid, U, Q1, L_dom, h)
        last_exc = NoConvergence(
            f"end-state mismatch {end_err:.2e} at L_dom={L_dom:.1f}")
        L_dom *= 1.5
    raise last_exc


def _finalize(model, shock, grid, U, Q1, L_dom, h):
    dU = np.column_stack([
        _fd_derivative_columns(grid, U[:, k]) for k in range(model.n)])
    interp = ProfileInterp(grid, U, Q1)
    prof = Profile(grid=grid, U=U, Q1=Q1, dU=dU, eta=np.nan,
                   x_singular=0.0, dap0=np.nan, L_dom=L_dom, interp=interp,
                   shock=shock, model_name=model.name, p=shock.p, h=h)
    sing = locate_singular_point(model, prof)
    prof.x_singular = sing["x0"]
    prof.dap0 = sing["dap0"]
    if abs(prof.dap0) < _DAP_TOL:
        raise DegenerateSingularPoint(
            f"|a_p'(0)| = {abs(prof.dap0):.2e} below {_DAP_TOL}")
    fit = profile_decay_rate(prof)
    prof.eta = fit["eta"]
    return prof


# ---------------------------------------------------------------------------
# measurements
# ---------------------------------------------------------------------------


def profile_decay_rate(profile: Profile) -> dict:
    """Exponential decay rate from one-sided log-linear tail fits.

    The fit window on each side is chosen by deviation magnitude, not grid
    position: points where |U - u_end| lies in [1e-6, 0.02] times the shock
    amplitude.  The upper cutoff keeps quadratic tail corrections small; the
    lower cutoff stays well clear of the truncated-domain floor.  A
    positional window (e.g. the outer third) breaks when the two end states
    have very different approach rates, since the faster side underflows long
    before the domain edge.
    """
    grid = profile.grid
    amp = profile.shock.amplitude
    eta_sides = []
    fit_res = 0.0
    for side in ("minus", "plus"):
        if side == "minus":
            half = grid <= 0.0
            ref = profile.shock.u_minus
            sign = -1.0
        else:
            half = grid >= 0.0
            ref = profile.shock.u_plus
            sign = 1.0
        dev = np.linalg.norm(profile.U[half] - ref[None, :], axis=1)
        keep = (dev > 1e-6 * amp) & (dev < 0.02 * amp)
        if keep.sum() < 5:
            raise FitFailed(
                f"fewer than 5 grid points in the {side}-side fit window "
                f"(|U - u_{side}| in [1e-6, 0.02] x amplitude)")
        xs = grid[half][keep]
        ys = np.log(dev[keep])
        slope, intercept = np.polyfit(xs, ys, 1)
        eta_sides.append(-sign * slope)
        fit_res = max(fit_res, float(np.abs(ys - (slope * xs + intercept)).max()))
    eta = float(min(eta_sides))
    if eta <= 0:
        raise FitFailed(f"non-positive fitted decay rate {eta}")
    return {"eta": eta, "fit_residual": fit_res,
            "eta_minus": float(eta_sides[0]), "eta_plus": float(eta_sides[1])}


def locate_singular_point(model: ModelSystem, profile: Profile) -> dict:
    """Zero of a_p(U(x1)) by bisection, plus its slope there."""
    grid = profile.grid
    vals = np.array([characteristic_speed(model, profile.U[i], profile.p)
                     for i in range(len(grid))])
    signs = np.sign(vals)
    signs[signs == 0] = 1
    flips = np.nonzero(np.diff(signs))[0]
    # ignore flips where the value is at roundoff scale around the crossing
    genuine = [i for i in flips
               if max(abs(vals[i]), abs(vals[i + 1])) > 1e-13]
    if len(genuine) > 1:
        raise MultipleSingularPoints(
            f"{len(genuine)} sign changes of a_p along the profile")
    if not genuine:
        raise DegenerateSingularPoint("a_p does not change sign on the grid")
    i = genuine[0]

    def ap_of_x(x):
        return characteristic_speed(model, profile.interp.U(x), profile.p)

    lo, hi = grid[i], grid[i + 1]
    flo = ap_of_x(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fmid = ap_of_x(mid)
        if hi - lo < 1e-12:
            break
        if (flo < 0) == (fmid < 0):
            lo, flo = mid, fmid
        else:
            hi = mid
    x0 = 0.5 * (lo + hi)
    hstep = max(1e-4, profile.h / 8.0)
    dap0 = (ap_of_x(x0 + hstep) - ap_of_x(x0 - hstep)) / (2 * hstep)
    return {"x0": float(x0), "dap0": float(dap0)}


def profile_residuals(model: ModelSystem, profile: Profile) -> dict:
    """Max-norm residuals of both profile equations on the stored grid."""
    shock = profile.shock
    target = model.f(0, shock.u_minus)
    fi = max(
        float(np.abs(model.f(0, profile.U[i]) + model.L * profile.Q1[i]
                     - target).max())
        for i in range(len(profile.grid)))
    grid, h = profile.grid, profile.h
    nn = len(grid)
    g_vals = np.array([model.g(profile.U[i]) for i in range(nn)])
    ell = 0.0
    for i in range(1, nn - 1):
        i2, w2 = _second_derivative_row(i, nn, h)
        i1, w1 = _first_derivative_row(i, nn, h)
        r = -float(w2 @ profile.Q1[i2]) + profile.Q1[i] + float(w1 @ g_vals[i1])
        ell = max(ell, abs(r))
    return {"first_integral": fi, "elliptic": ell}


def write_profile_csv(profile: Profile, path) -> None:
    """CSV columns: x1, U_1..U_n, Q1, dU_1..dU_n."""
    n = profile.U.shape[1]
    header = (["x1"] + [f"U_{k + 1}" for k in range(n)] + ["Q1"]
              + [f"dU_{k + 1}" for k in range(n)])
    data = np.column_stack([profile.grid, profile.U, profile.Q1, profile.dU])
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in data:
            fh.write(",".join(f"{v:.12g}" for v in row) + "\n")
