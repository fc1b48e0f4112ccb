"""Pin the coupled2x2 builtin: reference end states and margins.

The model couples two fields through a gradient flux f1 = grad Phi with

    Phi = u1^3/6 - u1 u2^2/2 + beta u1 u2 + alpha (u1^2 + u2^2)/2,

a constant symmetric transverse flux, and scalar radiative coupling
g(u) = L.u.  The normal characteristic speeds are alpha -/+ r with
r = |(u1, beta - u2)|, so the slow field is sonic on the circle r = alpha.

Writing psi for the angle of (u1, beta - u2), the genuine-nonlinearity
product for the slow family is sin(3 psi / 2) (up to eigenvector
orientation).  At psi = pi/3 the slow eigenvector is anti-radial, the
rarefaction ray through the sonic circle is exactly radial, psi is constant
along it, a_1(t) = t, and the GNL product is identically 1 — the most
robust place to put a standing 1-Lax shock.  This script pins the center,
the jump direction, Newton-corrected reference end states at the reference
amplitude, and independently computed margins, then writes them to the
package data file consumed by `builtin_model("coupled2x2")`.

The reference amplitude must sit inside the smooth-profile regime: the
sonic crossing of the profile is smooth only while the fold discriminant
(dg.r1)^2 + 4 kappa t* stays positive (it is 1 - 2 eps^2 for the scalar
model).  For these constants the discriminant changes sign near amplitude
0.10, so the reference amplitude is pinned at 0.05 with the discriminant
recorded and gated.

Run from the repository root:  python tools/pin_coupled2x2.py
"""

import json
import math
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from evanskit.models import (  # noqa: E402
    ShockData,
    coupled2x2_from_constants,
    lax_index,
    rh_residual,
)
from evanskit.profile import fold_data  # noqa: E402

ALPHA = 0.3
BETA = 0.4
PSI = math.pi / 3.0
REF_AMP = 0.05

OUT = Path(__file__).resolve().parents[1] / "src" / "evanskit" / "data" / "coupled2x2.json"


def slow_pair(model, u):
    """(a_1, r_1) with r_1 oriented along +(-sin(psi/2), cos(psi/2))."""
    evals, evecs = np.linalg.eigh(model.df(0, u))
    v = evecs[:, 0]
    if v[1] < 0:
        v = -v
    return evals[0], v


def gnl_product(model, u, h=1e-7):
    """(grad a_1 . r_1) by central differences on the eigenvalue field."""
    _, r1 = slow_pair(model, u)
    grad = np.empty(2)
    for k in range(2):
        up, um = u.copy(), u.copy()
        up[k] += h
        um[k] -= h
        grad[k] = (slow_pair(model, up)[0] - slow_pair(model, um)[0]) / (2 * h)
    return float(grad @ r1)


def diffusion_margin(model, u):
    """l_1 (L dg^T) r_1 with l_1 . r_1 = 1 (symmetric flux: l_1 = r_1^T)."""
    _, r1 = slow_pair(model, u)
    return float((r1 @ model.L) * (model.dg(u) @ r1))


def kawashima_min_margin(model, u, n_samples=64):
    dg = model.dg(u)
    worst = np.inf
    for k in range(n_samples):
        ang = math.pi * k / n_samples          # antipodal xi are equivalent
        xi = np.array([math.cos(ang), math.sin(ang)])
        a = xi[0] * model.df(0, u) + xi[1] * model.df(1, u)
        _, evecs = np.linalg.eigh(a)
        for j in range(2):
            v = evecs[:, j]
            worst = min(worst, abs(np.linalg.norm(model.L) * (dg @ v)))
    return float(worst)


def theta_closed_form(model, u, xi):
    """Best coercivity constant over skew K for n = 2 (exact 1-parameter form).

    For M(k) = sym(A0 L dg^T)|xi|^2 - k sym(J A(xi)) with J the unit skew
    matrix, min-eig M = tr/2 - |dev M|, so the optimum is the distance from
    dev(sym(L dg^T)) to the line spanned by dev(sym(J A(xi))).
    """
    a = xi[0] * model.df(0, u) + xi[1] * model.df(1, u)
    ldg = np.outer(model.L, model.dg(u))
    sym_ldg = 0.5 * (ldg + ldg.T)

    def dev(m):
        return np.array([0.5 * (m[0, 0] - m[1, 1]), 0.5 * (m[0, 1] + m[1, 0])])

    jmat = np.array([[0.0, 1.0], [-1.0, 0.0]])
    w = dev(0.5 * (jmat @ a + (jmat @ a).T))
    d = dev(sym_ldg)
    nw = np.linalg.norm(w)
    if nw < 1e-14:
        dist = np.linalg.norm(d)
    else:
        dist = np.linalg.norm(d - (d @ w) / (nw * nw) * w)
    return float(0.5 * np.trace(sym_ldg) - dist)


def main():
    center = np.array([ALPHA * math.cos(PSI), BETA - ALPHA * math.sin(PSI)])
    # direction from u_minus toward u_plus: a_1 decreases along it
    direction = np.array([math.sin(PSI / 2.0), -math.cos(PSI / 2.0)])

    constants = {
        "alpha": ALPHA,
        "beta": BETA,
        "flux2_matrix": [[0.7, 0.3], [0.3, 0.7]],
        "L": [1.0, 0.25],
        "domain_box": [[-0.35, 0.65], [-0.35, 0.38]],
        "hugoniot_center": center.tolist(),
        "hugoniot_direction": direction.tolist(),
    }
    model = coupled2x2_from_constants(constants)

    u_minus = center - 0.5 * REF_AMP * direction
    guess = center + 0.5 * REF_AMP * direction
    # Newton on f1(u_plus) = f1(u_minus)
    u_plus = guess.copy()
    target = model.f(0, u_minus)
    for _ in range(50):
        res = model.f(0, u_plus) - target
        if np.linalg.norm(res) < 1e-15:
            break
        u_plus = u_plus - np.linalg.solve(model.df(0, u_plus), res)

    rh = rh_residual(model, u_minus, u_plus, 0.0)
    p = lax_index(model, u_minus, u_plus, 0.0)
    shock = ShockData(u_minus, u_plus, 0.0, p=p)
    a1m, _ = slow_pair(model, u_minus)
    a1p, _ = slow_pair(model, u_plus)

    seg = [u_minus + t * (u_plus - u_minus) for t in np.linspace(0, 1, 33)]
    gnl_min = min(abs(gnl_product(model, u)) for u in seg)

    fold = fold_data(model, shock)

    report = {
        "rh_residual": rh,
        "lax_index": p,
        "a1_minus": float(a1m),
        "a1_plus": float(a1p),
        "realized_amplitude": shock.amplitude,
        "gnl_min_abs_on_segment": gnl_min,
        "diffusion_margin_minus": diffusion_margin(model, u_minus),
        "diffusion_margin_plus": diffusion_margin(model, u_plus),
        "kawashima_min_margin_minus_64": kawashima_min_margin(model, u_minus),
        "kawashima_min_margin_plus_64": kawashima_min_margin(model, u_plus),
        "theta_e1_minus": theta_closed_form(model, u_minus, np.array([1.0, 0.0])),
        "theta_e1_plus": theta_closed_form(model, u_plus, np.array([1.0, 0.0])),
        "theta_e2_minus": theta_closed_form(model, u_minus, np.array([0.0, 1.0])),
        "theta_e2_plus": theta_closed_form(model, u_plus, np.array([0.0, 1.0])),
        "fold_t_star": fold["t_star"],
        "fold_kappa": fold["kappa"],
        "fold_dg_r1": fold["dg_r1"],
        "crossing_discriminant": fold["discriminant"],
        "crossing_sigma": fold.get("sigma", float("nan")),
        "fold_u_star": fold["u_star"].tolist(),
    }

    checks = [
        ("rh_residual < 1e-12", rh < 1e-12),
        ("lax index p == 1", p == 1),
        ("a1 straddles 0",
         a1m > 0.2 * REF_AMP and a1p < -0.2 * REF_AMP),
        ("gnl margin > 0.9", gnl_min > 0.9),
        ("diffusion margins > 1e-3",
         report["diffusion_margin_minus"] > 1e-3
         and report["diffusion_margin_plus"] > 1e-3),
        ("kawashima margins > 1e-3",
         report["kawashima_min_margin_minus_64"] > 1e-3
         and report["kawashima_min_margin_plus_64"] > 1e-3),
        ("theta positive at axes",
         min(report["theta_e1_minus"], report["theta_e1_plus"],
             report["theta_e2_minus"], report["theta_e2_plus"]) > 1e-3),
        ("smooth crossing discriminant > 0.02",
         report["crossing_discriminant"] > 0.02),
        ("crossing slope above tolerance",
         report["crossing_sigma"] > 1e-4),
    ]
    ok = True
    for label, passed in checks:
        print(f"{'PASS' if passed else 'FAIL'}  {label}")
        ok = ok and passed
    for key, val in report.items():
        print(f"  {key} = {val!r}")
    if not ok:
        raise SystemExit("refusing to pin: a margin check failed")

    payload = dict(constants)
    payload["reference_amplitude"] = REF_AMP
    payload["u_minus_ref"] = u_minus.tolist()
    payload["u_plus_ref"] = u_plus.tolist()
    payload["lax_index"] = p
    payload["margins"] = {k: v for k, v in report.items() if k != "lax_index"}
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
