"""Model systems: hyperbolic fluxes with scalar elliptic radiative coupling.

A model describes

    A0(u) u_t + sum_j f_j(u)_{x_j} + L div q = 0,
    -grad div q + q + grad g(u) = 0,

with state u in an open box of R^n and q in R^d (d >= 2).  The first flux
direction is the shock-normal one.  Models are either builtin ("hamer2d",
"coupled2x2") or loaded from a JSON definition file whose flux/g entries are
arithmetic expressions in u1..un (grammar: + - * / ^ exp tanh).

Shock data holds a jump (u_minus, u_plus, s); `normalize_shock` shifts the
normal flux by -s*u so downstream modules can always assume a standing shock.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import NoConvergence, NonFinite, OutOfDomain, UnknownModel

_FD_SCALE = 1e-6  # central-difference step is _FD_SCALE * max(1, |u_k|)


# ---------------------------------------------------------------------------
# expression grammar
# ---------------------------------------------------------------------------
# expr  := term (('+'|'-') term)*
# term  := unary (('*'|'/') unary)*
# unary := '-' unary | power
# power := atom ('^' unary)?          (right associative)
# atom  := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'
#
# Identifiers are u1..un (plain "u" allowed when n == 1) and the functions
# exp, tanh.  ASTs are plain tuples; differentiation stays inside the grammar.

_FUNCS = ("exp", "tanh")


def _tokenize(text: str) -> list:
    toks = []
    i, m = 0, len(text)
    while i < m:
        c = text[i]
        if c.isspace():
            i += 1
        elif c in "+-*/^(),":
            toks.append(c)
            i += 1
        elif c.isdigit() or c == ".":
            j = i
            while j < m and (text[j].isdigit() or text[j] in ".eE" or
                             (text[j] in "+-" and text[j - 1] in "eE")):
                j += 1
            toks.append(("num", float(text[i:j])))
            i = j
        elif c.isalpha() or c == "_":
            j = i
            while j < m and (text[j].isalnum() or text[j] == "_"):
                j += 1
            toks.append(("ident", text[i:j]))
            i = j
        else:
            raise ValueError(f"unexpected character {c!r} in expression")
    return toks


class _Parser:
    def __init__(self, toks, nvars):
        self.toks = toks
        self.pos = 0
        self.nvars = nvars

    def peek(self):
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def take(self, want=None):
        tok = self.peek()
        if tok is None or (want is not None and tok != want):
            raise ValueError(f"expected {want!r}, got {tok!r}")
        self.pos += 1
        return tok

    def parse(self):
        node = self.expr()
        if self.peek() is not None:
            raise ValueError(f"trailing tokens at {self.peek()!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek() in ("+", "-"):
            op = self.take()
            rhs = self.term()
            node = ("add" if op == "+" else "sub", node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek() in ("*", "/"):
            op = self.take()
            rhs = self.unary()
            node = ("mul" if op == "*" else "div", node, rhs)
        return node

    def unary(self):
        if self.peek() == "-":
            self.take()
            return ("neg", self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == "^":
            self.take()
            return ("pow", base, self.unary())
        return base

    def atom(self):
        tok = self.peek()
        if tok == "(":
            self.take()
            node = self.expr()
            self.take(")")
            return node
        if isinstance(tok, tuple) and tok[0] == "num":
            self.take()
            return ("num", tok[1])
        if isinstance(tok, tuple) and tok[0] == "ident":
            self.take()
            name = tok[1]
            if name in _FUNCS:
                self.take("(")
                arg = self.expr()
                self.take(")")
                return ("call", name, arg)
            if name == "u" and self.nvars == 1:
                return ("var", 0)
            if name.startswith("u") and name[1:].isdigit():
                k = int(name[1:]) - 1
                if not 0 <= k < self.nvars:
                    raise ValueError(f"variable {name} out of range (n={self.nvars})")
                return ("var", k)
            raise ValueError(f"unknown identifier {name!r}")
        raise ValueError(f"unexpected token {tok!r}")


def parse_expression(text: str, nvars: int):
    """Parse an expression string into an AST tuple."""
    return _Parser(_tokenize(text), nvars).parse()


def eval_ast(node, u):
    kind = node[0]
    if kind == "num":
        return node[1]
    if kind == "var":
        return float(u[node[1]])
    if kind == "neg":
        return -eval_ast(node[1], u)
    if kind == "call":
        val = eval_ast(node[2], u)
        return float(np.exp(val)) if node[1] == "exp" else float(np.tanh(val))
    a = eval_ast(node[1], u)
    b = eval_ast(node[2], u)
    if kind == "add":
        return a + b
    if kind == "sub":
        return a - b
    if kind == "mul":
        return a * b
    if kind == "div":
        return a / b
    if kind == "pow":
        return a ** b
    raise ValueError(f"bad AST node {node!r}")


def diff_ast(node, k):
    """Derivative of an AST with respect to variable index k (stays in-grammar)."""
    kind = node[0]
    if kind == "num":
        return ("num", 0.0)
    if kind == "var":
        return ("num", 1.0 if node[1] == k else 0.0)
    if kind == "neg":
        return ("neg", diff_ast(node[1], k))
    if kind == "add" or kind == "sub":
        return (kind, diff_ast(node[1], k), diff_ast(node[2], k))
    if kind == "mul":
        a, b = node[1], node[2]
        return ("add", ("mul", diff_ast(a, k), b), ("mul", a, diff_ast(b, k)))
    if kind == "div":
        a, b = node[1], node[2]
        num = ("sub", ("mul", diff_ast(a, k), b), ("mul", a, diff_ast(b, k)))
        return ("div", num, ("mul", b, b))
    if kind == "pow":
        a, b = node[1], node[2]
        if b[0] != "num":
            raise ValueError("only constant exponents are differentiable in-grammar")
        c = b[1]
        return ("mul", ("mul", ("num", c), ("pow", a, ("num", c - 1.0))),
                diff_ast(a, k))
    if kind == "call":
        inner = diff_ast(node[2], k)
        if node[1] == "exp":
            return ("mul", node, inner)
        # d tanh = 1 - tanh^2
        sq = ("mul", node, node)
        return ("mul", ("sub", ("num", 1.0), sq), inner)
    raise ValueError(f"bad AST node {node!r}")


# ---------------------------------------------------------------------------
# model container
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelSystem:
    """Bundle of evaluators for one hyperbolic-elliptic model.

    flux_evals[j](u) -> (n,) is the flux in direction j (j=0 is shock-normal);
    dflux_evals[j](u) -> (n, n) are closed-form Jacobians when jacobian_mode
    is "closed_form", otherwise central finite differences are used.
    """

    name: str
    n: int
    d: int
    flux_evals: tuple
    g_eval: Callable
    L: np.ndarray
    A0_eval: Callable
    domain_box: np.ndarray          # (n, 2) open box
    jacobian_mode: str = "closed_form"
    dflux_evals: tuple | None = None
    dg_eval: Callable | None = None

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("models require d >= 2")
        if self.jacobian_mode not in ("closed_form", "finite_difference"):
            raise ValueError(f"bad jacobian_mode {self.jacobian_mode!r}")
        if self.jacobian_mode == "closed_form" and self.dflux_evals is None:
            raise ValueError("closed_form mode needs dflux_evals")
        object.__setattr__(self, "L", np.asarray(self.L, dtype=float))
        object.__setattr__(self, "domain_box",
                           np.asarray(self.domain_box, dtype=float))

    # -- state checks --------------------------------------------------------

    def check_state(self, u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if u.shape != (self.n,):
            raise ValueError(f"state must have shape ({self.n},), got {u.shape}")
        if not np.all(np.isfinite(u)):
            raise NonFinite(f"non-finite state {u}")
        lo, hi = self.domain_box[:, 0], self.domain_box[:, 1]
        if np.any(u <= lo) or np.any(u >= hi):
            raise OutOfDomain(f"state {u} outside open box {self.domain_box.tolist()}")
        return u

    # -- evaluators ----------------------------------------------------------

    def f(self, j, u):
        u = self.check_state(u)
        out = np.atleast_1d(np.asarray(self.flux_evals[j](u), dtype=float))
        if not np.all(np.isfinite(out)):
            raise NonFinite(f"flux f_{j + 1}({u}) not finite")
        return out

    def df(self, j, u):
        u = self.check_state(u)
        if self.jacobian_mode == "closed_form":
            out = np.atleast_2d(np.asarray(self.dflux_evals[j](u), dtype=float))
        else:
            out = _fd_jacobian(lambda v: self.flux_evals[j](v), u, self.n)
        if not np.all(np.isfinite(out)):
            raise NonFinite(f"df_{j + 1}({u}) not finite")
        return out

    def g(self, u):
        u = self.check_state(u)
        val = float(self.g_eval(u))
        if not np.isfinite(val):
            raise NonFinite(f"g({u}) not finite")
        return val

    def dg(self, u):
        u = self.check_state(u)
        if self.dg_eval is not None and self.jacobian_mode == "closed_form":
            out = np.atleast_1d(np.asarray(self.dg_eval(u), dtype=float))
        else:
            out = _fd_gradient(self.g_eval, u, self.n)
        if not np.all(np.isfinite(out)):
            raise NonFinite(f"dg({u}) not finite")
        return out

    def A0(self, u):
        u = self.check_state(u)
        out = np.atleast_2d(np.asarray(self.A0_eval(u), dtype=float))
        if not np.all(np.isfinite(out)):
            raise NonFinite(f"A0({u}) not finite")
        return out


def _fd_jacobian(func, u, n):
    jac = np.empty((n, n))
    for k in range(n):
        h = _FD_SCALE * max(1.0, abs(u[k]))
        up, um = u.copy(), u.copy()
        up[k] += h
        um[k] -= h
        jac[:, k] = (np.atleast_1d(func(up)) - np.atleast_1d(func(um))) / (2 * h)
    return jac


def _fd_gradient(func, u, n):
    grad = np.empty(n)
    for k in range(n):
        h = _FD_SCALE * max(1.0, abs(u[k]))
        up, um = u.copy(), u.copy()
        up[k] += h
        um[k] -= h
        grad[k] = (float(func(up)) - float(func(um))) / (2 * h)
    return grad


def eval_model(model: ModelSystem, u) -> dict:
    """Evaluate all model quantities at one state.

    Returns {"f": [f_1..f_d], "df": [df_1..df_d], "g", "dg", "A0"}.
    """
    return {
        "f": [model.f(j, u) for j in range(model.d)],
        "df": [model.df(j, u) for j in range(model.d)],
        "g": model.g(u),
        "dg": model.dg(u),
        "A0": model.A0(u),
    }


# ---------------------------------------------------------------------------
# shock data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShockData:
    """A (possibly not yet validated) shock triple plus classification."""

    u_minus: np.ndarray
    u_plus: np.ndarray
    s: float
    p: int | None = None
    amplitude: float = field(default=0.0)

    def __post_init__(self):
        um = np.atleast_1d(np.asarray(self.u_minus, dtype=float))
        up = np.atleast_1d(np.asarray(self.u_plus, dtype=float))
        object.__setattr__(self, "u_minus", um)
        object.__setattr__(self, "u_plus", up)
        object.__setattr__(self, "amplitude", float(np.linalg.norm(up - um)))


def rh_residual(model: ModelSystem, u_minus, u_plus, s) -> float:
    """Norm of the jump relation f1(u+) - f1(u-) - s (u+ - u-)."""
    um = np.atleast_1d(np.asarray(u_minus, dtype=float))
    up = np.atleast_1d(np.asarray(u_plus, dtype=float))
    jump = model.f(0, up) - model.f(0, um) - s * (up - um)
    return float(np.linalg.norm(jump))


def lax_index(model: ModelSystem, u_minus, u_plus, s) -> int | None:
    """Index p with a_p(u-) > s > a_p(u+) (strict, sorted speeds), else None."""
    am = np.sort(np.linalg.eigvals(model.df(0, u_minus)).real)
    ap = np.sort(np.linalg.eigvals(model.df(0, u_plus)).real)
    hits = [k for k in range(model.n) if am[k] > s > ap[k]]
    return hits[0] + 1 if len(hits) == 1 else None


def normalize_shock(model: ModelSystem, shock: ShockData):
    """Shift to a standing shock: f1 <- f1 - s*u, s <- 0.

    Returns (model', shock') leaving the inputs untouched.  With s = 0 this
    is the identity (same model object).
    """
    if shock.s == 0.0:
        return model, shock
    s = shock.s
    f1, df1 = model.flux_evals[0], None
    shifted_flux = (lambda u, _f=f1: np.atleast_1d(_f(u)) - s * u,) + model.flux_evals[1:]
    if model.dflux_evals is not None:
        d1 = model.dflux_evals[0]
        eye = np.eye(model.n)
        df1 = (lambda u, _d=d1: np.atleast_2d(_d(u)) - s * eye,) + model.dflux_evals[1:]
    model2 = replace(model, name=model.name + f"@s={s:g}",
                     flux_evals=shifted_flux, dflux_evals=df1)
    shock2 = ShockData(shock.u_minus, shock.u_plus, 0.0, shock.p)
    return model2, shock2


# ---------------------------------------------------------------------------
# builtin models
# ---------------------------------------------------------------------------

_DATA_DIR = Path(__file__).parent / "data"


def _hamer2d() -> ModelSystem:
    def flux(u):
        return 0.5 * u * u

    def dflux(u):
        return u.reshape(1, 1).copy()

    return ModelSystem(
        name="hamer2d",
        n=1,
        d=2,
        flux_evals=(flux, flux),
        dflux_evals=(dflux, dflux),
        g_eval=lambda u: float(u[0]),
        dg_eval=lambda u: np.ones(1),
        L=np.ones(1),
        A0_eval=lambda u: np.eye(1),
        domain_box=np.array([[-2.0, 2.0]]),
    )


def coupled2x2_constants() -> dict:
    """Pinned constants and reference states of the coupled2x2 model."""
    with open(_DATA_DIR / "coupled2x2.json") as fh:
        return json.load(fh)


def coupled2x2_from_constants(c: dict) -> ModelSystem:
    alpha, beta = c["alpha"], c["beta"]
    m2 = np.array(c["flux2_matrix"], dtype=float)
    lvec = np.array(c["L"], dtype=float)

    # f1 = grad Phi,  Phi = u1^3/6 - u1 u2^2/2 + beta u1 u2 + alpha (u1^2+u2^2)/2
    def flux1(u):
        u1, u2 = u
        return np.array([
            0.5 * u1 * u1 - 0.5 * u2 * u2 + beta * u2 + alpha * u1,
            -u1 * u2 + beta * u1 + alpha * u2,
        ])

    def dflux1(u):
        u1, u2 = u
        return np.array([[u1 + alpha, beta - u2],
                         [beta - u2, alpha - u1]])

    def flux2(u):
        return m2 @ u

    def dflux2(u):
        return m2.copy()

    return ModelSystem(
        name="coupled2x2",
        n=2,
        d=2,
        flux_evals=(flux1, flux2),
        dflux_evals=(dflux1, dflux2),
        g_eval=lambda u: float(lvec @ u),
        dg_eval=lambda u: lvec.copy(),
        L=lvec,
        A0_eval=lambda u: np.eye(2),
        domain_box=np.array(c["domain_box"], dtype=float),
    )


def _coupled2x2() -> ModelSystem:
    return coupled2x2_from_constants(coupled2x2_constants())


_BUILTINS = {"hamer2d": _hamer2d, "coupled2x2": _coupled2x2}


def builtin_model(name: str) -> ModelSystem:
    try:
        factory = _BUILTINS[name]
    except KeyError:
        raise UnknownModel(
            f"no builtin model {name!r}; known: {sorted(_BUILTINS)}") from None
    return factory()


def builtin_shock(model: ModelSystem, amplitude: float) -> ShockData:
    """Standing Lax shock of the requested amplitude for a builtin model."""
    if amplitude <= 0:
        raise ValueError("amplitude must be positive")
    if model.name == "hamer2d":
        um, up = np.array([amplitude / 2]), np.array([-amplitude / 2])
        return ShockData(um, up, 0.0, p=1)
    if model.name == "coupled2x2":
        c = coupled2x2_constants()
        center = np.array(c["hugoniot_center"], dtype=float)
        direction = np.array(c["hugoniot_direction"], dtype=float)
        um = center - 0.5 * amplitude * direction
        up = _solve_rh_zero_speed(model, um, center + 0.5 * amplitude * direction)
        p = lax_index(model, um, up, 0.0)
        shock = ShockData(um, up, 0.0, p=p)
        # rescale so the realized amplitude matches the request
        if abs(shock.amplitude - amplitude) > 1e-3 * amplitude:
            scale = amplitude / shock.amplitude
            um = center - 0.5 * scale * (up - um)
            up = _solve_rh_zero_speed(model, um, center + 0.5 * scale * (up - um))
            shock = ShockData(um, up, 0.0, p=lax_index(model, um, up, 0.0))
        return shock
    raise UnknownModel(f"no builtin shock construction for {model.name!r}")


def _solve_rh_zero_speed(model, u_minus, guess, tol=1e-14, maxit=60):
    """Newton solve of f1(u+) = f1(u-) for u_plus, from the given guess."""
    target = model.f(0, u_minus)
    u = np.asarray(guess, dtype=float).copy()
    for _ in range(maxit):
        r = model.f(0, u) - target
        if np.linalg.norm(r) < tol:
            return u
        u = u - np.linalg.solve(model.df(0, u), r)
    raise NoConvergence(
        f"jump-condition Newton stalled at {u} from u_minus={u_minus}")


# ---------------------------------------------------------------------------
# model definition files
# ---------------------------------------------------------------------------


def load_model(path) -> ModelSystem:
    """Load a model from a JSON definition file.

    Keys: name, n, d, flux_j (list of d vectors of expressions, or a builtin
    tag string), g, L, A0, domain_box.  Expressions use u1..un.
    """
    with open(path) as fh:
        spec = json.load(fh)
    if isinstance(spec.get("flux_j"), str):
        tag = spec["flux_j"]
        if tag.startswith("builtin:"):
            return builtin_model(tag.split(":", 1)[1])
        return builtin_model(tag)
    n = int(spec["n"])
    d = int(spec["d"])
    name = spec.get("name", Path(str(path)).stem)

    flux_asts = []
    for j in range(d):
        comps = spec["flux_j"][j]
        if isinstance(comps, str):
            comps = [comps]
        flux_asts.append([parse_expression(e, n) for e in comps])
    g_ast = parse_expression(spec["g"], n)

    dflux_asts = [[[diff_ast(comp, k) for k in range(n)] for comp in fj]
                  for fj in flux_asts]
    dg_ast = [diff_ast(g_ast, k) for k in range(n)]

    def make_flux(asts):
        return lambda u: np.array([eval_ast(a, u) for a in asts])

    def make_dflux(rows):
        return lambda u: np.array([[eval_ast(a, u) for a in row] for row in rows])

    a0 = np.asarray(spec["A0"], dtype=float)
    return ModelSystem(
        name=name,
        n=n,
        d=d,
        flux_evals=tuple(make_flux(fa) for fa in flux_asts),
        dflux_evals=tuple(make_dflux(da) for da in dflux_asts),
        g_eval=lambda u: eval_ast(g_ast, u),
        dg_eval=lambda u: np.array([eval_ast(a, u) for a in dg_ast]),
        L=np.asarray(spec["L"], dtype=float),
        A0_eval=lambda u: a0.copy(),
        domain_box=np.asarray(spec["domain_box"], dtype=float),
        jacobian_mode=spec.get("jacobian_mode", "closed_form"),
    )


def resolve_model(name_or_path: str) -> ModelSystem:
    """Accept either a builtin model name or a path to a definition file."""
    if name_or_path in _BUILTINS:
        return builtin_model(name_or_path)
    if Path(name_or_path).exists():
        return load_model(name_or_path)
    raise UnknownModel(f"{name_or_path!r} is neither a builtin nor a file")
