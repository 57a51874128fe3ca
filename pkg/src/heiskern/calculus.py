"""Cameron-Martin translation calculus: weights, shifts, star operators.

Conventions
-----------
A translation element g = (h, z) acts through the straight drift line
``h_path(t) = (t/T) h``.  Every shifted functional follows the single rule

    Psi_g(B, c) = Psi(B - h_path, c - z - omega(B_T, h) / 2),

with omega evaluated at the *unshifted* endpoint.  Composing two shifts
this way reproduces the group product, which is the property the
quasi-invariance and integration-by-parts identities hinge on.

The star operator acting on fiber functionals is

    Xstar Psi = D_X Psi + Psi * (D_X log j0 + <h, B_T>),

where ``D_X`` is the derivative along the shift family.  Applied
iteratively to the constant 1 it produces the polynomial weights that
represent iterated left-invariant derivatives under the expectation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import paths as _paths
from .groups import CylinderFunction, GroupElement, SkewForm, tilde_x_values
from .heat_kernel import cholesky_spd, log_j0_values
from .mc import McEstimate, McSettings, run_batches
from .quadratics import levy_z, rho_batch, rho_values


# ---------------------------------------------------------------------------
# Scalar translation weights
# ---------------------------------------------------------------------------


def log_jbar(h, x, T: float):
    """log of the flat Cameron-Martin factor exp(<h,x>/T - |h|^2/(2T))."""
    h = np.atleast_1d(np.asarray(h, dtype=float))
    x = np.asarray(x, dtype=float)
    return (x @ h) / T - (h @ h) / (2.0 * T)


def jbar(h, x, T: float):
    return np.exp(log_jbar(h, x, T))


def shift_args(form: SkewForm, grid: _paths.TimeGrid, p_values, c,
               g: GroupElement):
    """Apply the translation shift to (path values, fiber argument).

    Returns (shifted path values, shifted c); batched over leading axes of
    ``p_values`` (shape (..., n+1, N)) and ``c`` (shape (..., d)).
    """
    h_path = _paths.drift_path(grid, g.w).values  # (n+1, N)
    terminal = p_values[..., -1, :]
    c2 = c - g.c - 0.5 * form.omega(terminal, g.w)
    return p_values - h_path, c2


def log_jg(form: SkewForm, grid: _paths.TimeGrid, p_values, c,
           g: GroupElement):
    """log of the translated mixing density j0(B - h_path, c - z - omega/2)."""
    pv, cc = shift_args(form, grid, p_values, c, g)
    return log_j0_values(rho_values(form, grid.dt, pv), cc)


def jg(form: SkewForm, g: GroupElement, p, c) -> float:
    """Translated mixing density for a single sampled path."""
    c = np.atleast_1d(np.asarray(c, dtype=float))
    return float(np.exp(log_jg(form, p.grid, p.values, c, g)))


class ShiftableFunctional:
    """A functional Psi(B, c) that knows how translations act on it.

    ``evaluator(form, grid, p_values, c)`` returns one value per path,
    broadcasting over leading axes.  Shifting produces a new functional
    that evaluates the original at translated arguments.
    """

    def __init__(self, name: str, evaluator):
        self.name = name
        self.evaluator = evaluator

    def evaluate(self, form, grid, p_values, c):
        return self.evaluator(form, grid, p_values, c)

    def shifted(self, g: GroupElement) -> "ShiftableFunctional":
        def ev(form, grid, p_values, c):
            pv, cc = shift_args(form, grid, p_values, c, g)
            return self.evaluator(form, grid, pv, cc)

        return ShiftableFunctional(f"{self.name}|shift", ev)

    @classmethod
    def one(cls) -> "ShiftableFunctional":
        return cls("one", lambda form, grid, pv, c:
                   np.ones(np.broadcast_shapes(pv.shape[:-2], c.shape[:-1])))


# ---------------------------------------------------------------------------
# The derivative of log j0 along a shift family
# ---------------------------------------------------------------------------


def xtilde_log_j0_values(form: SkewForm, grid: _paths.TimeGrid, p_values, c,
                         x_dir: GroupElement):
    """d/d eps at 0 of log j0 along the shift family of direction (h, z).

    Closed form (R = rho(B), S = rho(B, h_path), V = z + omega(B_T, h)/2):

        -(1/2) <R^-1 (S + S^T) R^-1 c, c> + <R^-1 c, V> + tr(R^-1 S).
    """
    h_path = _paths.drift_path(grid, x_dir.w).values
    r = rho_values(form, grid.dt, p_values)
    s = rho_values(form, grid.dt, p_values, h_path)
    rinv = np.linalg.inv(r)
    v = x_dir.c + 0.5 * form.omega(p_values[..., -1, :], x_dir.w)
    rc = np.einsum("...jk,...k->...j", rinv, c)
    sym = s + np.swapaxes(s, -1, -2)
    quad = -0.5 * np.einsum("...j,...jk,...k->...", rc, sym, rc)
    lin = np.einsum("...j,...j->...", rc, v)
    trace = np.einsum("...jk,...kj->...", rinv, s)
    return quad + lin + trace


# ---------------------------------------------------------------------------
# Polynomial fiber functionals closed under the star operator
# ---------------------------------------------------------------------------
#
# Grammar: a polynomial functional is a sum of terms; a term is a real
# coefficient times a product of factors
#
#   QuadFactor(word, u, v)  = < M_1 ... M_r u, v >
#   TraceFactor(word)       = tr(M_1 ... M_r)
#   LinFactor(h)            = <h, B_T>
#
# over matrix atoms   rinv = rho(B)^-1, rho_bh(h) = rho(B, h_path),
#                     rho_hh(h1, h2)  (deterministic),
# and vector atoms    c, omega_w(h) = omega(B_T, h), const vectors.
#
# The star operator maps this class to itself; that closure is what makes
# the right-hand side of the integration-by-parts identities exactly
# computable (no finite differences, no extra bias).


@dataclass(frozen=True)
class MatAtom:
    kind: str  # "rinv" | "rho_bh" | "rho_hh"
    h1: tuple = ()
    h2: tuple = ()
    transposed: bool = False

    def transpose(self) -> "MatAtom":
        if self.kind == "rinv":
            return self  # symmetric
        return MatAtom(self.kind, self.h1, self.h2, not self.transposed)


@dataclass(frozen=True)
class VecAtom:
    kind: str  # "c" | "omega_w" | "const"
    h: tuple = ()
    payload: tuple = ()


@dataclass(frozen=True)
class QuadFactor:
    word: tuple
    u: VecAtom
    v: VecAtom


@dataclass(frozen=True)
class TraceFactor:
    word: tuple


@dataclass(frozen=True)
class LinFactor:
    h: tuple


@dataclass(frozen=True)
class Term:
    coeff: float
    factors: tuple


def _vkey(v) -> tuple:
    return tuple(float(x) for x in np.atleast_1d(v))


class EvalContext:
    """Numeric values of all atoms for one batch of (paths, fiber points)."""

    def __init__(self, form: SkewForm, grid: _paths.TimeGrid, p_values, c,
                 rinv: np.ndarray | None = None):
        self.form = form
        self.grid = grid
        self.p_values = np.asarray(p_values, dtype=float)
        self.c = np.asarray(c, dtype=float)
        self.terminal = self.p_values[..., -1, :]
        self._mats = {}
        self._vecs = {}
        self._lins = {}
        if rinv is not None:
            self._mats[MatAtom("rinv")] = rinv

    def mat(self, atom: MatAtom) -> np.ndarray:
        if atom in self._mats:
            return self._mats[atom]
        if atom.transposed:
            out = np.swapaxes(self.mat(atom.transpose()), -1, -2)
        elif atom.kind == "rinv":
            out = np.linalg.inv(
                rho_values(self.form, self.grid.dt, self.p_values))
        elif atom.kind == "rho_bh":
            hp = _paths.drift_path(self.grid, np.array(atom.h1)).values
            out = rho_values(self.form, self.grid.dt, self.p_values, hp)
        elif atom.kind == "rho_hh":
            h1 = _paths.drift_path(self.grid, np.array(atom.h1)).values
            h2 = _paths.drift_path(self.grid, np.array(atom.h2)).values
            out = rho_values(self.form, self.grid.dt, h1, h2)
        else:
            raise ValueError(f"unknown matrix atom {atom.kind!r}")
        self._mats[atom] = out
        return out

    def vec(self, atom: VecAtom) -> np.ndarray:
        if atom in self._vecs:
            return self._vecs[atom]
        if atom.kind == "c":
            out = self.c
        elif atom.kind == "omega_w":
            out = self.form.omega(self.terminal, np.array(atom.h))
        elif atom.kind == "const":
            out = np.array(atom.payload)
        else:
            raise ValueError(f"unknown vector atom {atom.kind!r}")
        self._vecs[atom] = out
        return out

    def lin(self, h: tuple) -> np.ndarray:
        if h in self._lins:
            return self._lins[h]
        out = self.terminal @ np.array(h)
        self._lins[h] = out
        return out

    def factor_values(self, factor):
        if isinstance(factor, QuadFactor):
            vec = self.vec(factor.u)
            for m in reversed(factor.word):
                vec = np.einsum("...ab,...b->...a", self.mat(m), vec)
            return np.einsum("...a,...a->...", vec, self.vec(factor.v))
        if isinstance(factor, TraceFactor):
            mats = [self.mat(m) for m in factor.word]
            out = mats[0]
            for m in mats[1:]:
                out = np.einsum("...ab,...bc->...ac", out, m)
            return np.einsum("...aa->...", out)
        if isinstance(factor, LinFactor):
            return self.lin(factor.h)
        raise TypeError(f"unknown factor type {type(factor)!r}")


class PolynomialFunctional:
    """Sum of products of grammar factors; closed under the star operator."""

    def __init__(self, terms):
        self.terms = [t for t in terms if t.coeff != 0.0]

    @classmethod
    def one(cls) -> "PolynomialFunctional":
        return cls([Term(1.0, ())])

    def __len__(self):
        return len(self.terms)

    def scale(self, factor: float) -> "PolynomialFunctional":
        return PolynomialFunctional(
            [Term(factor * t.coeff, t.factors) for t in self.terms]
        )

    def __add__(self, other: "PolynomialFunctional") -> "PolynomialFunctional":
        return PolynomialFunctional(self.terms + other.terms)

    def simplify(self, tol: float = 0.0) -> "PolynomialFunctional":
        merged = {}
        for t in self.terms:
            key = tuple(sorted(map(repr, t.factors)))
            if key in merged:
                c, f = merged[key]
                merged[key] = (c + t.coeff, f)
            else:
                merged[key] = (t.coeff, t.factors)
        out = [Term(c, f) for c, f in merged.values() if abs(c) > tol]
        return PolynomialFunctional(out)

    def conforms(self) -> bool:
        """Structural check: every factor is inside the closed grammar."""
        mat_kinds = {"rinv", "rho_bh", "rho_hh"}
        vec_kinds = {"c", "omega_w", "const"}
        for t in self.terms:
            for f in t.factors:
                if isinstance(f, QuadFactor):
                    if not all(m.kind in mat_kinds for m in f.word):
                        return False
                    if f.u.kind not in vec_kinds or f.v.kind not in vec_kinds:
                        return False
                elif isinstance(f, TraceFactor):
                    if not all(m.kind in mat_kinds for m in f.word):
                        return False
                elif not isinstance(f, LinFactor):
                    return False
        return True

    def values(self, ctx: EvalContext) -> np.ndarray:
        shape = np.broadcast_shapes(ctx.p_values.shape[:-2], ctx.c.shape[:-1])
        total = np.zeros(shape)
        for t in self.terms:
            prod = np.full(shape, t.coeff)
            for f in t.factors:
                prod = prod * ctx.factor_values(f)
            total += prod
        return total

    def as_functional(self, name: str = "poly") -> ShiftableFunctional:
        def ev(form, grid, p_values, c):
            return self.values(EvalContext(form, grid, p_values, c))

        return ShiftableFunctional(name, ev)

    # -- differentiation ----------------------------------------------------

    def xstar(self, form: SkewForm, x_dir: GroupElement) -> "PolynomialFunctional":
        """Apply the star operator for direction (h, z); stays in grammar."""
        h = _vkey(x_dir.w)
        z = _vkey(x_dir.c)
        derived = self._derivative(form, x_dir)
        log_part = _log_j0_derivative_poly(h, z)
        lin_part = PolynomialFunctional([Term(1.0, (LinFactor(h),))])
        multiplier = log_part + lin_part
        product = PolynomialFunctional(
            [
                Term(t.coeff * m.coeff, t.factors + m.factors)
                for t in self.terms
                for m in multiplier.terms
            ]
        )
        return (derived + product).simplify()

    def _derivative(self, form: SkewForm, x_dir: GroupElement) -> "PolynomialFunctional":
        h = _vkey(x_dir.w)
        z = _vkey(x_dir.c)
        out = []
        for t in self.terms:
            for i, f in enumerate(t.factors):
                rest = t.factors[:i] + t.factors[i + 1:]
                for coeff, repl in _factor_derivative(form, f, h, z):
                    out.append(Term(t.coeff * coeff, rest + repl))
        return PolynomialFunctional(out)


def _log_j0_derivative_poly(h: tuple, z: tuple) -> PolynomialFunctional:
    """The closed form of D_X log j0 inside the grammar (symmetrized)."""
    rinv = MatAtom("rinv")
    s = MatAtom("rho_bh", h1=h)
    c = VecAtom("c")
    terms = [
        Term(-0.5, (QuadFactor((rinv, s, rinv), c, c),)),
        Term(-0.5, (QuadFactor((rinv, s.transpose(), rinv), c, c),)),
        Term(1.0, (QuadFactor((rinv,), c, VecAtom("const", payload=z)),)),
        Term(0.5, (QuadFactor((rinv,), c, VecAtom("omega_w", h=h)),)),
        Term(1.0, (TraceFactor((rinv, s)),)),
    ]
    return PolynomialFunctional(terms)


def _mat_derivative(form: SkewForm, atom: MatAtom, h: tuple):
    """d/d eps of a matrix atom under B -> B - eps h_path.

    Returns a list of (coeff, replacement word).
    """
    if atom.kind == "rinv":
        s = MatAtom("rho_bh", h1=h)
        return [
            (1.0, (MatAtom("rinv"), s, MatAtom("rinv"))),
            (1.0, (MatAtom("rinv"), s.transpose(), MatAtom("rinv"))),
        ]
    if atom.kind == "rho_bh":
        # d rho(B - eps h_path, h1_path) = -rho(h_path, h1_path)
        new = MatAtom("rho_hh", h1=h, h2=atom.h1)
        if atom.transposed:
            new = new.transpose()
        return [(-1.0, (new,))]
    if atom.kind == "rho_hh":
        return []
    raise ValueError(f"unknown matrix atom {atom.kind!r}")


def _vec_derivative(form: SkewForm, atom: VecAtom, h: tuple, z: tuple):
    """d/d eps of a vector atom under the full shift family."""
    if atom.kind == "c":
        # c -> c - eps z - (eps/2) omega(B_T, h)
        return [
            (-1.0, VecAtom("const", payload=z)),
            (-0.5, VecAtom("omega_w", h=h)),
        ]
    if atom.kind == "omega_w":
        # omega(B_T - eps h, h1): derivative -omega(h, h1), a constant
        val = form.omega(np.array(h), np.array(atom.h))
        return [(-1.0, VecAtom("const", payload=_vkey(val)))]
    if atom.kind == "const":
        return []
    raise ValueError(f"unknown vector atom {atom.kind!r}")


def _factor_derivative(form: SkewForm, factor, h: tuple, z: tuple):
    """Product-rule derivative of one factor: list of (coeff, factor tuple)."""
    out = []
    if isinstance(factor, QuadFactor):
        for i, m in enumerate(factor.word):
            for coeff, repl in _mat_derivative(form, m, h):
                word = factor.word[:i] + repl + factor.word[i + 1:]
                out.append((coeff, (QuadFactor(word, factor.u, factor.v),)))
        for coeff, atom in _vec_derivative(form, factor.u, h, z):
            out.append((coeff, (QuadFactor(factor.word, atom, factor.v),)))
        for coeff, atom in _vec_derivative(form, factor.v, h, z):
            out.append((coeff, (QuadFactor(factor.word, factor.u, atom),)))
        return out
    if isinstance(factor, TraceFactor):
        for i, m in enumerate(factor.word):
            for coeff, repl in _mat_derivative(form, m, h):
                word = factor.word[:i] + repl + factor.word[i + 1:]
                out.append((coeff, (TraceFactor(word),)))
        return out
    if isinstance(factor, LinFactor):
        # <h1, B_T - eps h> differentiates to the constant -<h1, h>
        val = -float(np.array(factor.h) @ np.array(h))
        return [(val, ())] if val != 0.0 else []
    raise TypeError(f"unknown factor type {type(factor)!r}")


def psi_weight(form: SkewForm, x_list) -> PolynomialFunctional:
    """The iterated star weight for directions [X_1, ..., X_m], m <= 3.

    Applies the star operator with X_1 first (innermost), matching the
    order in which the left-invariant derivatives are peeled off the
    integrand one at a time.
    """
    if len(x_list) > 3:
        raise ValueError("iterated star weights are supported for m <= 3")
    poly = PolynomialFunctional.one()
    for x_dir in x_list:
        poly = poly.xstar(form, x_dir)
    if not poly.conforms():
        raise RuntimeError("star weight left the closed grammar")
    return poly


# ---------------------------------------------------------------------------
# Finite-difference star operator for generic functionals
# ---------------------------------------------------------------------------


def xtilde_shift_derivative(form, grid, p_values, c, psi: ShiftableFunctional,
                            x_dir: GroupElement, step: float = 1e-3):
    """Richardson-extrapolated derivative of Psi along the shift family."""

    def at(eps):
        pv, cc = shift_args(form, grid, p_values, c, x_dir.scaled(eps))
        return psi.evaluate(form, grid, pv, cc)

    d1 = (at(step) - at(-step)) / (2.0 * step)
    d2 = (at(0.5 * step) - at(-0.5 * step)) / step
    return (4.0 * d2 - d1) / 3.0


def xstar_functional(form: SkewForm, psi: ShiftableFunctional,
                     x_dir: GroupElement, step: float = 1e-3) -> ShiftableFunctional:
    """Star operator on a generic shiftable functional (finite differences).

    The polynomial route (:func:`psi_weight`) is exact and preferred; this
    exists for functionals outside the closed grammar and for validating
    the exact route.
    """

    def ev(form_, grid, p_values, c):
        deriv = xtilde_shift_derivative(form_, grid, p_values, c, psi, x_dir, step)
        base = psi.evaluate(form_, grid, p_values, c)
        logj = xtilde_log_j0_values(form_, grid, p_values, c, x_dir)
        lin = p_values[..., -1, :] @ np.asarray(x_dir.w, dtype=float)
        return deriv + base * (logj + lin)

    return ShiftableFunctional(f"xstar({psi.name})", ev)


def xstar_apply(form: SkewForm, x_dir: GroupElement, psi: ShiftableFunctional,
                p, c, step: float = 1e-3) -> float:
    """Star operator evaluated at a single (path, fiber) point."""
    c = np.atleast_1d(np.asarray(c, dtype=float))
    fn = xstar_functional(form, psi, x_dir, step)
    return float(fn.evaluate(form, p.grid, p.values, c))


# ---------------------------------------------------------------------------
# Iterated invariant derivatives of cylinder functions (for the left sides)
# ---------------------------------------------------------------------------


def _translate_right(form, w, c, g: GroupElement):
    return w + g.w, c + g.c + 0.5 * form.omega(w, g.w)


def _translate_left(form, w, c, g: GroupElement):
    return w + g.w, c + g.c + 0.5 * form.omega(g.w, w)


def iterated_invariant_derivative(form: SkewForm, fun: CylinderFunction,
                                  w, c, x_list, side: str = "left",
                                  step: float = 5e-3):
    """Nested invariant derivatives of a cylinder function at (w, c), batched.

    side = "left": directions act by right multiplication, X_1 outermost
    (the composite point is g . e1 X_1 . e2 X_2 ... in list order).
    side = "right": directions act by left multiplication, building
    e_m X_m . ... . e_1 X_1 . g.

    Uses Richardson-extrapolated central differences in every direction;
    for m = 1 with an analytic gradient the exact derivative is used.
    """
    m = len(x_list)
    w = np.asarray(w, dtype=float)
    c = np.asarray(c, dtype=float)
    if m == 1 and fun.grad is not None:
        if side == "left":
            return tilde_x_values(form, x_list[0], fun, w, c)
        from .groups import hat_x_values

        return hat_x_values(form, x_list[0], fun, w, c)

    def mixed(eps):
        total = 0.0
        for signs in np.ndindex(*(2,) * m):
            sgn = [1.0 if s == 0 else -1.0 for s in signs]
            wk, ck = w, c
            if side == "left":
                for s, x_dir in zip(sgn, x_list):
                    wk, ck = _translate_right(form, wk, ck, x_dir.scaled(s * eps))
            else:
                for s, x_dir in zip(sgn, x_list):
                    wk, ck = _translate_left(form, wk, ck, x_dir.scaled(s * eps))
            total = total + math.prod(sgn) * fun(wk, ck)
        return total / (2.0 * eps) ** m

    d1 = mixed(step)
    d2 = mixed(0.5 * step)
    return (4.0 * d2 - d1) / 3.0


# ---------------------------------------------------------------------------
# Integration-by-parts checks
# ---------------------------------------------------------------------------


def _paired_report(stats, mc: McSettings, extra=()):
    report = {name: s.estimate(mc) for name, s in stats.items()}
    gap = report["gap"]
    bias = abs(report["gap_coarse"].mean - gap.mean) if "gap_coarse" in report else 0.0
    tolerance = 3.0 * gap.std_error + bias
    report["tolerance"] = tolerance
    report["bias_term"] = bias
    report["passed"] = bool(abs(gap.mean) <= tolerance)
    for k, v in extra:
        report[k] = v
    return report


def ibp_check(form: SkewForm, x_list, fun: CylinderFunction, T: float,
              mc: McSettings) -> dict:
    """Left integration by parts: iterated derivative vs polynomial weight.

    Both sides run on common paths: the left side evaluates the iterated
    left-invariant derivative of ``fun`` at the endpoint (B_T, Z_T), the
    right side draws c ~ N(0, rho) and weights fun(B_T, c) with the exact
    star polynomial.  The per-path difference gives a paired gap whose
    3 sigma band (plus a half-resolution bias term) is the pass budget.
    """
    grid = _paths.TimeGrid(T, mc.n_steps)
    poly = psi_weight(form, x_list)

    def kernel(stream, count):
        gen = stream.generator()
        batch = _paths.bm_batch(grid, form.dim_w, gen, count)
        xi = gen.standard_normal((count, form.dim_c))
        out = {}
        for tag, b in (("", batch), ("_coarse", batch.coarsened())):
            z = levy_z(form, b)
            lhs = iterated_invariant_derivative(
                form, fun, b.terminal, z, x_list, side="left")
            rho = rho_batch(form, b)
            chol = cholesky_spd(rho)
            cs = np.einsum("...jk,...k->...j", chol, xi)
            ctx = EvalContext(form, b.grid, b.values, cs)
            rhs = np.asarray(fun(b.terminal, cs)) * poly.values(ctx)
            out["lhs" + tag] = lhs
            out["rhs" + tag] = rhs
            out["gap" + tag] = lhs - rhs
        return out

    stats = run_batches(mc, kernel)
    return _paired_report(stats, mc, extra=[("n_terms", len(poly))])


def right_ibp_check(form: SkewForm, x_list, fun: CylinderFunction, T: float,
                    mc: McSettings) -> dict:
    """Right integration by parts via inversion symmetry.

    The right-invariant side E[(hat X_1 ... hat X_m F)(nu)] equals
    (-1)^m E[F(-B_T, -c) psi(B, c)] with the same star polynomial, because
    inversion maps right derivatives to left ones and leaves the endpoint
    law invariant.
    """
    grid = _paths.TimeGrid(T, mc.n_steps)
    poly = psi_weight(form, x_list)
    sign = -1.0 if len(x_list) % 2 else 1.0

    def kernel(stream, count):
        gen = stream.generator()
        batch = _paths.bm_batch(grid, form.dim_w, gen, count)
        xi = gen.standard_normal((count, form.dim_c))
        out = {}
        for tag, b in (("", batch), ("_coarse", batch.coarsened())):
            z = levy_z(form, b)
            lhs = iterated_invariant_derivative(
                form, fun, b.terminal, z, x_list, side="right")
            rho = rho_batch(form, b)
            chol = cholesky_spd(rho)
            cs = np.einsum("...jk,...k->...j", chol, xi)
            ctx = EvalContext(form, b.grid, b.values, cs)
            rhs = sign * np.asarray(fun(-b.terminal, -cs)) * poly.values(ctx)
            out["lhs" + tag] = lhs
            out["rhs" + tag] = rhs
            out["gap" + tag] = lhs - rhs
        return out

    stats = run_batches(mc, kernel)
    return _paired_report(stats, mc, extra=[("n_terms", len(poly))])


def psi_estimate(form: SkewForm, x_list, x, c, T: float,
                 mc: McSettings) -> McEstimate:
    """Conditional star-weight estimate psi(x, c) by bridge Monte Carlo.

    Ratio of bridge averages E[psi j0 | x] / E[j0 | x] at the fiber point
    c, with a delta-method standard error.  Directions beyond m = 3 are
    rejected (the polynomial blowup is not worth automating past that).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    c = np.atleast_1d(np.asarray(c, dtype=float))
    grid = _paths.TimeGrid(T, mc.n_steps)
    poly = psi_weight(form, x_list)

    def kernel(stream, count):
        batch = _paths.bridge_batch(grid, form.dim_w, x, stream, count)
        rho = rho_batch(form, batch)
        j0 = np.exp(log_j0_values(rho, c))
        ctx = EvalContext(form, grid, batch.values, c[None, :])
        num = poly.values(ctx) * j0
        return {"num": num, "den": j0, "cross": num * j0}

    stats = run_batches(mc, kernel)
    n = stats["num"].n
    num, den = stats["num"].mean, stats["den"].mean
    if den <= 0:
        raise ZeroDivisionError("bridge j0 average vanished")
    ratio = num / den
    var_num = (stats["num"].std_error * math.sqrt(n)) ** 2
    var_den = (stats["den"].std_error * math.sqrt(n)) ** 2
    cov = (stats["cross"].mean - num * den) * n / (n - 1)
    var_ratio = (
        var_num / den**2
        + num**2 * var_den / den**4
        - 2.0 * num * cov / den**3
    ) / n
    se = math.sqrt(max(var_ratio, 0.0))
    return McEstimate(float(ratio), se, n, mc.n_steps, mc.seed)


# ---------------------------------------------------------------------------
# Quasi-invariance checks
# ---------------------------------------------------------------------------


def right_translation_check(form: SkewForm, g: GroupElement,
                            fun: CylinderFunction, T: float,
                            mc: McSettings) -> dict:
    """E[F(nu . g)] against the weighted untranslated average.

    The right side weights F(B_T, c) with (jg / j0)(B, c) jbar_h(B_T); both
    sides run on common paths so the gap is paired.  The weight itself is
    emitted as the ``mass`` statistic (its mean must be 1).
    """
    grid = _paths.TimeGrid(T, mc.n_steps)

    def kernel(stream, count):
        gen = stream.generator()
        batch = _paths.bm_batch(grid, form.dim_w, gen, count)
        xi = gen.standard_normal((count, form.dim_c))
        z = levy_z(form, batch)
        w_t = batch.terminal
        lhs = np.asarray(
            fun(w_t + g.w, z + g.c + 0.5 * form.omega(w_t, g.w))
        )
        rho = rho_batch(form, batch)
        chol = cholesky_spd(rho)
        cs = draw_fiber_from(chol, xi)
        log_num = log_jg(form, grid, batch.values, cs, g)
        log_den = log_j0_values(rho, cs)
        weight = np.exp(log_num - log_den + log_jbar(g.w, w_t, T))
        rhs = np.asarray(fun(w_t, cs)) * weight
        return {"lhs": lhs, "rhs": rhs, "gap": lhs - rhs, "mass": weight}

    stats = run_batches(mc, kernel)
    report = _paired_report(
        {k: v for k, v in stats.items() if k != "mass"}, mc)
    report["mass"] = stats["mass"].estimate(mc)
    return report


def left_translation_check(form: SkewForm, g: GroupElement,
                           fun: CylinderFunction, T: float,
                           mc: McSettings) -> dict:
    """E[F(g . nu)] via inversion reduced to a right translation by g^{-1}."""
    grid = _paths.TimeGrid(T, mc.n_steps)
    g_inv = GroupElement(-g.w, -g.c)

    def kernel(stream, count):
        gen = stream.generator()
        batch = _paths.bm_batch(grid, form.dim_w, gen, count)
        xi = gen.standard_normal((count, form.dim_c))
        z = levy_z(form, batch)
        w_t = batch.terminal
        lhs = np.asarray(
            fun(g.w + w_t, g.c + z + 0.5 * form.omega(g.w, w_t))
        )
        rho = rho_batch(form, batch)
        chol = cholesky_spd(rho)
        cs = draw_fiber_from(chol, xi)
        log_num = log_jg(form, grid, batch.values, cs, g_inv)
        log_den = log_j0_values(rho, cs)
        weight = np.exp(log_num - log_den + log_jbar(g_inv.w, w_t, T))
        rhs = np.asarray(fun(-w_t, -cs)) * weight
        return {"lhs": lhs, "rhs": rhs, "gap": lhs - rhs, "mass": weight}

    stats = run_batches(mc, kernel)
    report = _paired_report(
        {k: v for k, v in stats.items() if k != "mass"}, mc)
    report["mass"] = stats["mass"].estimate(mc)
    return report


def weighted_translation_check(form: SkewForm, g: GroupElement,
                               fun: CylinderFunction,
                               psi: ShiftableFunctional, T: float,
                               mc: McSettings) -> dict:
    """Translation identity with a fiber-functional weight Psi.

    Compares E[F((B_T, c) . g) Psi(B, c)] with
    E[F(B_T, c) Psi_g(B, c) (jg / j0) jbar]; the shifted functional is the
    generic shift rule applied to Psi, so this exercises composition of
    shifts on non-cylinder weights.
    """
    grid = _paths.TimeGrid(T, mc.n_steps)
    psi_g = psi.shifted(g)

    def kernel(stream, count):
        gen = stream.generator()
        batch = _paths.bm_batch(grid, form.dim_w, gen, count)
        xi = gen.standard_normal((count, form.dim_c))
        w_t = batch.terminal
        rho = rho_batch(form, batch)
        chol = cholesky_spd(rho)
        cs = draw_fiber_from(chol, xi)
        psi_vals = psi.evaluate(form, grid, batch.values, cs)
        lhs = np.asarray(
            fun(w_t + g.w, cs + g.c + 0.5 * form.omega(w_t, g.w))
        ) * psi_vals
        log_num = log_jg(form, grid, batch.values, cs, g)
        log_den = log_j0_values(rho, cs)
        weight = np.exp(log_num - log_den + log_jbar(g.w, w_t, T))
        psi_g_vals = psi_g.evaluate(form, grid, batch.values, cs)
        rhs = np.asarray(fun(w_t, cs)) * psi_g_vals * weight
        return {"lhs": lhs, "rhs": rhs, "gap": lhs - rhs}

    stats = run_batches(mc, kernel)
    return _paired_report(stats, mc)


def draw_fiber_from(chol: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """c = L xi for pre-drawn standard normals (keeps pairing explicit)."""
    return np.einsum("...jk,...k->...j", chol, xi)
