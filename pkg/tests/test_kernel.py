import os
import subprocess
import sys

import numpy as np
import pytest
from scipy.linalg import expm

from evanskit.errors import BasisDegeneracy, StiffnessFailure
from evanskit.kernel import (
    HAVE_EXT,
    CoeffTable,
    backend_name,
    propagate_block,
)

BACKENDS = [False, True] if HAVE_EXT else [False]


def constant_table(N0, d0, x_lo, x_hi, n_lam, n_nodes=33):
    xs = np.linspace(x_lo, x_hi, n_nodes)
    m = N0.shape[0]
    return CoeffTable(xs, np.broadcast_to(N0, (n_nodes, m, m)),
                      np.broadcast_to(d0, (n_nodes, m)), n_lam)


@pytest.fixture(scope="module")
def random_system():
    rng = np.random.default_rng(11)
    N0 = 0.8 * (rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)))
    return N0


# ---------------------------------------------------------------------------
# closed-form and cross-library oracles
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("use_ext", BACKENDS)
def test_constant_coefficients_match_expm(random_system, use_ext):
    N0 = random_system
    lam = 0.3 - 0.7j
    tab = constant_table(N0, np.ones(3), -1.5, 4.0, n_lam=2)
    S = np.diag([1.0, 1.0, 0.0])
    exact = expm((N0 - lam * S) * (4.0 - (-1.5)))
    res = propagate_block(tab, lam, np.eye(3, dtype=complex), -1.5, 4.0,
                          rtol=1e-10, atol=1e-13, use_ext=use_ext)
    assert res.backend == backend_name(use_ext)
    rel = np.abs(res.columns() - exact).max() / np.abs(exact).max()
    assert rel < 1e-8


@pytest.mark.parametrize("use_ext", BACKENDS)
def test_reverse_direction_matches_expm(random_system, use_ext):
    N0 = random_system
    tab = constant_table(N0, np.ones(3), -1.5, 4.0, n_lam=0)
    exact = expm(N0 * (-1.5 - 4.0))
    res = propagate_block(tab, 0.0, np.eye(3, dtype=complex), 4.0, -1.5,
                          rtol=1e-10, atol=1e-13, use_ext=use_ext)
    rel = np.abs(res.columns() - exact).max() / np.abs(exact).max()
    assert rel < 1e-8


@pytest.mark.parametrize("use_ext", BACKENDS)
def test_scalar_variable_coefficient_closed_form(use_ext):
    # W' = (sin(x) - lam) W  =>  W(x) = exp(cos(x0) - cos(x) - lam (x-x0))
    xs = np.linspace(0.0, 6.0, 601)
    N = np.sin(xs)[:, None, None].astype(complex)
    tab = CoeffTable(xs, N, np.ones((601, 1)), n_lam=1)
    lam = 0.4 + 0.9j
    res = propagate_block(tab, lam, np.array([[1.0 + 0j]]), 0.5, 5.5,
                          rtol=1e-11, atol=1e-14, use_ext=use_ext)
    exact = np.exp(np.cos(0.5) - np.cos(5.5) - lam * 5.0)
    got = res.columns()[0, 0]
    assert got == pytest.approx(exact, rel=1e-8)


@pytest.mark.parametrize("use_ext", BACKENDS)
def test_theta_division_closed_form(use_ext):
    # theta(x) W' = W with theta = e^{x/10}:
    # W(x) = exp(-10 e^{-x/10} + 10 e^{-x0/10})
    xs = np.linspace(0.0, 8.0, 401)
    tab = CoeffTable(xs, np.ones((401, 1, 1), dtype=complex),
                     np.exp(xs / 10.0)[:, None], n_lam=0)
    res = propagate_block(tab, 0.0, np.array([[1.0 + 0j]]), 1.0, 7.0,
                          rtol=1e-11, atol=1e-14, use_ext=use_ext)
    exact = np.exp(-10 * np.exp(-0.7) + 10 * np.exp(-0.1))
    assert res.columns()[0, 0] == pytest.approx(exact, rel=1e-8)


@pytest.mark.parametrize("use_ext", BACKENDS)
def test_stiff_exponents_recovered_through_logs(use_ext):
    # growth spread e^{560} across columns: reconstruction must go through
    # the per-column log scales, stored entries stay O(1)
    mus = np.array([6.0, -8.0, 0.5])
    tab = constant_table(np.diag(mus).astype(complex), np.ones(3),
                         0.0, 40.0, n_lam=0, n_nodes=81)
    res = propagate_block(tab, 0.0, np.eye(3, dtype=complex), 0.0, 40.0,
                          rtol=1e-10, atol=1e-300, use_ext=use_ext)
    log_norms = res.column_log_norms()
    assert log_norms == pytest.approx(mus * 40.0, abs=1e-5)
    stored = np.linalg.norm(res.W, axis=0)
    assert stored.max() < 2e2 and stored.min() > 5e-3
    assert np.linalg.norm(res.M, axis=0) == pytest.approx(np.ones(3),
                                                          abs=1e-12)
    assert res.renorms > 10


@pytest.mark.parametrize("use_ext", BACKENDS)
def test_determinant_tracks_trace_integral(use_ext):
    # Liouville: d/dx log det B = tr(Theta^{-1}(N - lam S)); the QR/mixing
    # bookkeeping must reproduce the quadrature of the trace exactly
    rng = np.random.default_rng(5)
    xs = np.linspace(-3.0, 9.0, 241)
    m, n_lam = 3, 2
    N = np.zeros((len(xs), m, m), dtype=complex)
    for i in range(m):
        for j in range(m):
            a, b, c = rng.standard_normal(3) * 0.5
            N[:, i, j] = a + b * np.sin(xs) + c * np.cos(2 * xs) \
                + 1j * 0.3 * np.sin(xs + i - j)
    d = np.empty((len(xs), m))
    for i in range(m):
        d[:, i] = 1.5 + 0.5 * np.sin(xs / 2.0 + i)
    tab = CoeffTable(xs, N, d, n_lam)
    lam = 0.2 + 0.5j

    res = propagate_block(tab, lam, np.eye(m, dtype=complex), -2.0, 8.0,
                          rtol=1e-11, atol=1e-14, use_ext=use_ext)
    det_small = np.linalg.det(res.W @ res.M)
    logdet = np.log(det_small) + res.logs.sum()

    xq = np.linspace(-2.0, 8.0, 20001)
    tr = np.zeros(len(xq), dtype=complex)
    for idx, x in enumerate(xq):
        Nx = tab.N(x)
        dx = tab.theta_diag(x)
        tr[idx] = sum((Nx[i, i] - (lam if i < n_lam else 0.0)) / dx[i]
                      for i in range(m))
    integral = np.trapezoid(tr, xq)
    assert logdet.real == pytest.approx(integral.real, abs=1e-6)
    phase = np.exp(1j * (logdet.imag - integral.imag))
    assert abs(np.angle(phase)) < 1e-6


# ---------------------------------------------------------------------------
# backend equivalence and self-consistency
# ---------------------------------------------------------------------------


@pytest.mark.skipif(not HAVE_EXT, reason="extension not built")
def test_backends_agree(random_system):
    N0 = random_system
    tab = constant_table(N0, np.array([0.7, 1.0, 1.3]), 0.0, 30.0, n_lam=1)
    W0 = np.linalg.qr(np.arange(6).reshape(3, 2) + 1.0 + 0j)[0]
    out = {}
    for use_ext in (False, True):
        res = propagate_block(tab, 0.1 + 0.3j, W0, 0.0, 30.0,
                              rtol=1e-9, atol=1e-12, use_ext=use_ext)
        out[use_ext] = res
    a, b = out[False], out[True]
    assert a.steps == b.steps and a.renorms == b.renorms
    ca, cb = a.column_log_norms(), b.column_log_norms()
    assert ca == pytest.approx(cb, abs=1e-9)
    fa, fb = a.W @ a.M, b.W @ b.M
    assert np.abs(fa - fb).max() / np.abs(fa).max() < 1e-7


@pytest.mark.parametrize("use_ext", BACKENDS)
def test_tolerance_halving_reproducibility(random_system, use_ext):
    N0 = random_system
    tab = constant_table(N0, np.ones(3), 0.0, 10.0, n_lam=2)
    W0 = np.eye(3, dtype=complex)[:, :2]
    cols = {}
    for rtol in (1e-8, 5e-9):
        res = propagate_block(tab, 0.05j, W0, 0.0, 10.0,
                              rtol=rtol, atol=1e-14, use_ext=use_ext)
        cols[rtol] = res.columns()
    diff = np.abs(cols[1e-8] - cols[5e-9]).max()
    assert diff / np.abs(cols[5e-9]).max() < 1e-6


@pytest.mark.parametrize("use_ext", BACKENDS)
def test_zero_span_is_identity(random_system, use_ext):
    tab = constant_table(random_system, np.ones(3), 0.0, 5.0, n_lam=0)
    W0 = np.linalg.qr(random_system)[0]
    res = propagate_block(tab, 0.0, W0, 2.0, 2.0, use_ext=use_ext)
    assert np.array_equal(res.W, W0)
    assert np.array_equal(res.M, np.eye(3))
    assert res.steps == 0


# ---------------------------------------------------------------------------
# failure paths and validation
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("use_ext", BACKENDS)
def test_step_budget_exhaustion_raises(random_system, use_ext):
    tab = constant_table(10.0 * random_system, np.ones(3), 0.0, 50.0, n_lam=0)
    with pytest.raises(StiffnessFailure):
        propagate_block(tab, 0.0, np.eye(3, dtype=complex), 0.0, 50.0,
                        rtol=1e-12, atol=1e-14, max_steps=5, use_ext=use_ext)


@pytest.mark.parametrize("use_ext", BACKENDS)
def test_dependent_columns_raise_on_renorm(use_ext):
    tab = constant_table(np.diag([6.0, 6.0, 6.0]).astype(complex),
                         np.ones(3), 0.0, 20.0, n_lam=0)
    W0 = np.zeros((3, 2), dtype=complex)
    W0[:, 0] = [1.0, 0.0, 0.0]
    W0[:, 1] = [1.0, 0.0, 0.0]      # same direction: rank 1
    with pytest.raises(BasisDegeneracy):
        propagate_block(tab, 0.0, W0, 0.0, 20.0, use_ext=use_ext)


def test_table_validation():
    xs = np.linspace(0, 1, 9)
    good_N = np.zeros((9, 2, 2))
    good_d = np.ones((9, 2))
    with pytest.raises(ValueError, match="increase"):
        CoeffTable(xs[::-1], good_N, good_d, 1)
    with pytest.raises(ValueError, match="N_samples"):
        CoeffTable(xs, np.zeros((9, 2, 3)), good_d, 1)
    with pytest.raises(ValueError, match="d_samples"):
        CoeffTable(xs, good_N, np.ones((9, 3)), 1)
    with pytest.raises(ValueError, match="n_lam"):
        CoeffTable(xs, good_N, good_d, 5)
    tab = CoeffTable(xs, good_N, good_d, 1)
    with pytest.raises(ValueError, match="outside"):
        propagate_block(tab, 0.0, np.zeros((2, 1), dtype=complex), 0.0, 2.0)
    with pytest.raises(ValueError, match="columns"):
        propagate_block(tab, 0.0, np.zeros((2, 3), dtype=complex), 0.0, 1.0)
    with pytest.raises(ValueError, match="rows"):
        propagate_block(tab, 0.0, np.zeros((3, 1), dtype=complex), 0.0, 1.0)


def test_coefftable_evaluates_sampled_functions():
    xs = np.linspace(0.0, 3.0, 301)
    N = np.cos(xs)[:, None, None].astype(complex)
    d = (2.0 + np.sin(xs))[:, None]
    tab = CoeffTable(xs, N, d, 1)
    for x in (0.123, 1.456, 2.789):
        assert tab.N(x)[0, 0] == pytest.approx(np.cos(x), abs=1e-8)
        assert tab.theta_diag(x)[0] == pytest.approx(2.0 + np.sin(x),
                                                     abs=1e-8)


def test_disable_ext_env_forces_fallback():
    code = ("import evanskit.kernel as k; "
            "print(k.HAVE_EXT, k.backend_name())")
    env = dict(os.environ, EVANSKIT_DISABLE_EXT="1")
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["False", "python"]
