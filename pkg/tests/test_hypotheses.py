import json

import numpy as np
import pytest

from evanskit.errors import NoCoercivity, NotStrictlyHyperbolic
from evanskit.hypotheses import (
    CheckReport,
    check_constant_multiplicity,
    check_gnl_and_diffusion,
    check_kawashima,
    check_rankine_hugoniot,
    check_strict_hyperbolicity,
    check_symmetrizability,
    classify_lax,
    compensating_matrix,
    run_all_checks,
    unit_sphere_samples,
)
from evanskit.models import (
    ModelSystem,
    ShockData,
    builtin_model,
    builtin_shock,
    coupled2x2_constants,
)


@pytest.fixture(scope="module")
def hamer():
    m = builtin_model("hamer2d")
    return m, builtin_shock(m, 0.2)


@pytest.fixture(scope="module")
def coupled():
    m = builtin_model("coupled2x2")
    amp = coupled2x2_constants()["reference_amplitude"]
    return m, builtin_shock(m, amp)


def make_model(flux1, dflux1, g, dg, L, n=2, flux2=None, dflux2=None):
    eye = np.eye(n)
    flux2 = flux2 or (lambda u: u.copy())
    dflux2 = dflux2 or (lambda u: eye.copy())
    return ModelSystem(
        name="adhoc", n=n, d=2,
        flux_evals=(flux1, flux2),
        dflux_evals=(dflux1, dflux2),
        g_eval=g, dg_eval=dg, L=np.asarray(L, float),
        A0_eval=lambda u: eye.copy(),
        domain_box=np.array([[-3.0, 3.0]] * n),
    )


# ---------------------------------------------------------------------------
# S1 / S2
# ---------------------------------------------------------------------------


def test_rankine_hugoniot_examples(hamer):
    m, _ = hamer
    assert check_rankine_hugoniot(m, [-0.1], [0.1], 0.0).passed
    assert check_rankine_hugoniot(m, [1.0], [-0.5], 0.25).passed
    rep = check_rankine_hugoniot(m, [1.0], [0.5], 0.0)
    assert rep.verdict == "fail"
    assert rep.witness["residual"] == pytest.approx(0.375, abs=1e-15)


def test_classify_lax_hamer(hamer):
    m, s = hamer
    out = classify_lax(m, s.u_minus, s.u_plus, 0.0)
    assert out["p"] == 1
    assert out["report"].margin == pytest.approx(0.1, abs=1e-12)


def test_classify_lax_coupled(coupled):
    m, s = coupled
    out = classify_lax(m, s.u_minus, s.u_plus, 0.0)
    assert out["p"] == 1
    # slow speeds straddle 0 by half the amplitude on each side
    assert out["report"].margin == pytest.approx(0.5 * s.amplitude, abs=1e-10)


def test_classify_lax_zero_amplitude_fails(hamer):
    m, _ = hamer
    out = classify_lax(m, [0.1], [0.1], 0.0)
    assert out["p"] is None
    assert out["report"].verdict == "fail"


def test_classify_lax_rejects_coalescing_speeds():
    m = make_model(lambda u: u.copy(), lambda u: np.eye(2),
                   lambda u: u[0], lambda u: np.array([1.0, 0.0]), [1.0, 0.0])
    with pytest.raises(NotStrictlyHyperbolic):
        classify_lax(m, [0.5, 0.0], [-0.5, 0.0], 0.0)


def test_strict_hyperbolicity_margin(coupled):
    m, s = coupled
    rep = check_strict_hyperbolicity(m, s)
    assert rep.passed
    # spectral gap 2r, smallest on the minus side where r = 0.3 - amp/2
    expected = 2.0 * (0.3 - 0.5 * s.amplitude)
    assert rep.margin == pytest.approx(expected, abs=1e-10)


# ---------------------------------------------------------------------------
# S3
# ---------------------------------------------------------------------------


def test_gnl_and_diffusion_hamer(hamer):
    m, s = hamer
    rep = check_gnl_and_diffusion(m, s.u_minus, s.u_plus, 1)
    assert rep.passed
    assert rep.witness["gnl_min_abs"] == pytest.approx(1.0, abs=1e-6)
    assert rep.witness["diffusion_minus"] == pytest.approx(1.0, abs=1e-10)


def test_gnl_and_diffusion_coupled_matches_pinned(coupled):
    m, s = coupled
    rep = check_gnl_and_diffusion(m, s.u_minus, s.u_plus, 1)
    assert rep.passed
    pinned = coupled2x2_constants()["margins"]
    assert rep.witness["gnl_min_abs"] == pytest.approx(
        pinned["gnl_min_abs_on_segment"], rel=1e-6)
    assert rep.witness["diffusion_minus"] == pytest.approx(
        pinned["diffusion_margin_minus"], rel=1e-8)
    assert rep.witness["diffusion_plus"] == pytest.approx(
        pinned["diffusion_margin_plus"], rel=1e-8)


def test_constant_g_fails_diffusion():
    m = make_model(lambda u: np.array([0.5 * u[0] ** 2, 2.0 * u[1]]),
                   lambda u: np.array([[u[0], 0.0], [0.0, 2.0]]),
                   lambda u: 1.0, lambda u: np.zeros(2), [1.0, 0.5])
    rep = check_gnl_and_diffusion(m, [0.5, 0.0], [-0.5, 0.0], 1)
    assert rep.verdict == "fail"
    assert rep.witness["diffusion_minus"] == pytest.approx(0.0, abs=1e-14)


# ---------------------------------------------------------------------------
# A1 / A2 / H1
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("fixture", ["hamer", "coupled"])
def test_symmetrizability_builtin(fixture, request):
    m, s = request.getfixturevalue(fixture)
    assert check_symmetrizability(m, s).passed


def test_symmetrizability_flags_asymmetric_flux():
    m = make_model(lambda u: np.array([u[1], 2.0 * u[0]]),
                   lambda u: np.array([[0.0, 1.0], [2.0, 0.0]]),
                   lambda u: u[0], lambda u: np.array([1.0, 0.0]), [1.0, 0.0])
    rep = check_symmetrizability(m, ShockData([0.5, 0.0], [-0.5, 0.0], 0.0))
    assert rep.verdict == "fail"
    assert rep.witness["max_asymmetry"] == pytest.approx(1.0, abs=1e-12)


def test_kawashima_hamer_all_directions(hamer):
    m, s = hamer
    for side in ("minus", "plus"):
        rep = check_kawashima(m, side, 64, shock=s)
        assert rep.passed
        assert rep.margin == pytest.approx(1.0, abs=1e-12)


def test_kawashima_coupled_matches_pinned(coupled):
    m, s = coupled
    pinned = coupled2x2_constants()["margins"]
    rep_m = check_kawashima(m, "minus", 64, shock=s)
    rep_p = check_kawashima(m, "plus", 64, shock=s)
    assert rep_m.passed and rep_p.passed
    assert rep_m.margin == pytest.approx(pinned["kawashima_min_margin_minus_64"],
                                         rel=1e-9)
    assert rep_p.margin == pytest.approx(pinned["kawashima_min_margin_plus_64"],
                                         rel=1e-9)


def test_kawashima_zero_coupling_fails():
    m = make_model(lambda u: np.array([0.5 * u[0] ** 2, 2.0 * u[1]]),
                   lambda u: np.array([[u[0], 0.0], [0.0, 2.0]]),
                   lambda u: u[0], lambda u: np.array([1.0, 0.0]),
                   L=[0.0, 0.0])
    rep = check_kawashima(m, "minus", 16, shock=ShockData([0.5, 0], [-0.5, 0], 0))
    assert rep.verdict == "fail"
    assert "xi" in rep.witness


def test_kawashima_requires_enough_samples(hamer):
    m, s = hamer
    with pytest.raises(ValueError):
        check_kawashima(m, "minus", 8, shock=s)


@pytest.mark.parametrize("fixture,pattern", [("hamer", [1]), ("coupled", [1, 1])])
def test_constant_multiplicity_builtin(fixture, pattern, request):
    m, s = request.getfixturevalue(fixture)
    rep = check_constant_multiplicity(m, "plus", 64, shock=s)
    assert rep.passed
    assert rep.witness["pattern"] == pattern


def test_constant_multiplicity_crossing_fails():
    # identity normal flux vs diag(1,2) transverse flux: the symbol has a
    # double eigenvalue at xi=(1,0) but simple ones at (0,1)
    m = make_model(lambda u: u.copy(), lambda u: np.eye(2),
                   lambda u: u[0] + u[1], lambda u: np.ones(2), [1.0, 1.0],
                   flux2=lambda u: np.array([u[0], 2.0 * u[1]]),
                   dflux2=lambda u: np.diag([1.0, 2.0]))
    rep = check_constant_multiplicity(m, "minus", 16,
                                      shock=ShockData([0.5, 0], [-0.5, 0], 0))
    assert rep.verdict == "fail"
    assert len(rep.witness["patterns"]) == 2


# ---------------------------------------------------------------------------
# K1
# ---------------------------------------------------------------------------


def test_compensating_matrix_hamer(hamer):
    m, s = hamer
    comp = compensating_matrix(m, "plus", [1.0, 0.0], shock=s)
    assert comp.theta == pytest.approx(1.0, abs=1e-12)
    assert comp.K.shape == (1, 1) and comp.K[0, 0] == 0.0


def closed_form_theta(model, u, xi):
    """Exact n=2 optimum: distance from dev(sym(L dg^T)) to span(dev(sym(J A)))."""
    a = xi[0] * model.df(0, u) + xi[1] * model.df(1, u)
    ldg = np.outer(model.L, model.dg(u))
    sym = 0.5 * (ldg + ldg.T)

    def dev(mat):
        return np.array([0.5 * (mat[0, 0] - mat[1, 1]),
                         0.5 * (mat[0, 1] + mat[1, 0])])

    jmat = np.array([[0.0, 1.0], [-1.0, 0.0]])
    w = dev(0.5 * (jmat @ a + (jmat @ a).T))
    dvec = dev(sym)
    nw = np.linalg.norm(w)
    dist = (np.linalg.norm(dvec) if nw < 1e-14
            else np.linalg.norm(dvec - (dvec @ w) / nw**2 * w))
    return 0.5 * np.trace(sym) - dist


@pytest.mark.parametrize("axis", [0, 1])
@pytest.mark.parametrize("side", ["minus", "plus"])
def test_compensating_matrix_coupled_against_closed_form(coupled, side, axis):
    m, s = coupled
    xi = np.zeros(2)
    xi[axis] = 1.0
    comp = compensating_matrix(m, side, xi, shock=s)
    u = s.u_minus if side == "minus" else s.u_plus
    assert comp.theta > 0
    assert comp.theta == pytest.approx(closed_form_theta(m, u, xi), abs=1e-7)
    # reported theta must equal a from-scratch eigenvalue recomputation
    coupling = np.outer(m.L, m.dg(u))
    a = xi[0] * m.df(0, u) + xi[1] * m.df(1, u)
    mat = 0.5 * (coupling + coupling.T) - 0.5 * (comp.K @ a + (comp.K @ a).T)
    recomputed = np.linalg.eigvalsh(mat).min()
    assert comp.theta == pytest.approx(recomputed, abs=1e-10)
    # exact skewness of the stored matrix
    assert np.abs(comp.K + comp.K.T).max() == 0.0


def test_compensating_matrix_coupled_matches_pinned(coupled):
    m, s = coupled
    pinned = coupled2x2_constants()["margins"]
    comp = compensating_matrix(m, "plus", [1.0, 0.0], shock=s)
    assert comp.theta == pytest.approx(pinned["theta_e1_plus"], abs=1e-7)
    comp2 = compensating_matrix(m, "minus", [0.0, 1.0], shock=s)
    assert comp2.theta == pytest.approx(pinned["theta_e2_minus"], abs=1e-7)


def test_no_coercivity_when_coupling_misses_an_eigenvector():
    # df1 = diag(1,2) with dg = L = e1: the second eigenvector never couples
    m = make_model(lambda u: np.array([u[0], 2.0 * u[1]]),
                   lambda u: np.diag([1.0, 2.0]),
                   lambda u: u[0], lambda u: np.array([1.0, 0.0]), [1.0, 0.0])
    with pytest.raises(NoCoercivity):
        compensating_matrix(m, "minus", [1.0, 0.0],
                            shock=ShockData([0.5, 0], [-0.5, 0], 0))


# ---------------------------------------------------------------------------
# aggregate
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("name", ["hamer2d", "coupled2x2"])
def test_run_all_checks_passes_builtins(name):
    m = builtin_model(name)
    s = builtin_shock(m, 0.2)
    reports = run_all_checks(m, s, n_samples=64, seed=42)
    ids = [r.check_id for r in reports]
    for expected in ("S1", "S2-RH", "S2-Lax", "S3", "A1",
                     "A2-minus", "A2-plus", "H1-minus", "H1-plus", "K1"):
        assert expected in ids
    assert all(r.passed for r in reports), [
        (r.check_id, r.verdict) for r in reports if not r.passed]
    assert all(np.isfinite(r.margin) for r in reports)


def test_run_all_checks_deterministic(coupled):
    m, s = coupled
    a = [r.to_json() for r in run_all_checks(m, s, seed=7)]
    b = [r.to_json() for r in run_all_checks(m, s, seed=7)]
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_check_report_fail_requires_witness():
    with pytest.raises(ValueError):
        CheckReport("X", "fail", None)


def test_unit_sphere_samples_axes_and_norms():
    pts = unit_sphere_samples(2, 64)
    np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-14)
    np.testing.assert_allclose(pts[0], [1.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(pts[32], [0.0, 1.0], atol=1e-15)
    pts3 = unit_sphere_samples(3, 20, seed=3)
    assert pts3.shape == (20, 3)
    np.testing.assert_allclose(pts3[:3], np.eye(3), atol=1e-15)
