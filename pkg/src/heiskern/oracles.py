"""Analytic oracles: closed forms the Monte Carlo estimates are tested against.

Everything in this module is deterministic quadrature or linear algebra; no
sampling.  The oracles are deliberately built along routes independent of
the simulation code (Schur forms, matrix functions, 1-D quadrature, an ODE
cross-check) so that agreement with the path estimates is informative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import product as _iter_product

import numpy as np
import scipy.integrate
import scipy.linalg
import scipy.sparse

from .quadratics import check_skew


class OracleError(RuntimeError):
    """An oracle failed its own convergence or validation check."""


# ---------------------------------------------------------------------------
# Block quasi-diagonalization of skew matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuasiDiagonal:
    """Real canonical form of a skew matrix: A = Q Atilde Q^T.

    ``q`` is orthogonal, ``angles`` holds the positive block angles in
    descending order, ``zero_dim`` the dimension of the kernel.  Atilde is
    block diagonal with blocks [[0, a], [-a, 0]] followed by zeros.
    """

    q: np.ndarray
    angles: np.ndarray
    zero_dim: int

    @property
    def dim(self) -> int:
        return self.q.shape[0]

    def block_matrix(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim))
        for b, a in enumerate(self.angles):
            i = 2 * b
            out[i, i + 1] = a
            out[i + 1, i] = -a
        return out

    def reconstruct(self) -> np.ndarray:
        return self.q @ self.block_matrix() @ self.q.T


def quasi_diagonalize(a, tol: float = None) -> QuasiDiagonal:
    """Orthogonal block-diagonalization of a skew matrix.

    Parameters
    ----------
    a : (N, N) array_like, antisymmetric
    tol : float, optional
        Angles below this are treated as zero.  Defaults to
        ``N * eps * ||a||_2``.

    Returns
    -------
    QuasiDiagonal

    Notes
    -----
    Uses the real Schur form, which for a skew (hence normal) matrix is
    already block diagonal.  Blocks are normalized to positive angle by
    column swaps and sorted in descending order; the angles equal the
    nonzero singular values of ``a`` (each singular value appears twice in
    the spectrum, once per block column).
    """
    a = check_skew(a)
    n = a.shape[0]
    opnorm = float(np.linalg.norm(a, 2)) if n else 0.0
    if tol is None:
        tol = n * np.finfo(float).eps * max(opnorm, 1.0)
    t, q = scipy.linalg.schur(a, output="real")
    blocks = []  # (angle, col_lo, col_hi)
    zero_cols = []
    i = 0
    while i < n:
        if i + 1 < n and abs(t[i + 1, i]) > tol:
            ang = 0.5 * (t[i, i + 1] - t[i + 1, i])
            if ang >= 0:
                blocks.append((ang, i, i + 1))
            else:
                blocks.append((-ang, i + 1, i))
            i += 2
        else:
            zero_cols.append(i)
            i += 1
    blocks.sort(key=lambda b: -b[0])
    order = [c for _, lo, hi in blocks for c in (lo, hi)] + zero_cols
    qd = QuasiDiagonal(
        q=q[:, order].copy(),
        angles=np.array([b[0] for b in blocks]),
        zero_dim=len(zero_cols),
    )
    residual = np.abs(qd.reconstruct() - a).max()
    if residual > 1e-10 * max(opnorm, 1.0):
        raise OracleError(
            f"quasi-diagonalization residual {residual:.3e} too large"
        )
    return qd


def ground_state_sigma(a) -> np.ndarray:
    """The symmetric PSD square root of A^T A for skew A.

    This is the drift matrix of the ground-state transformed generator; it
    commutes with A and shares its kernel.
    """
    a = check_skew(a)
    w, v = np.linalg.eigh(a.T @ a)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


# ---------------------------------------------------------------------------
# Characteristic functions of quadratic functionals
# ---------------------------------------------------------------------------


def levy_char(angles, T: float) -> float:
    """Product formula for the oscillatory quadratic expectation.

    For a skew matrix with block angles ``a_1..a_m``,

        E[exp(i int <A B, dB>)] = prod_i 1 / cosh(a_i T).
    """
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    return float(np.prod(1.0 / np.cosh(angles * T)))


def exp_quadratic_oracle(a, T: float) -> float:
    """Damped-side closed form det(cosh(Sigma T))^(-1/2), Sigma = sqrt(A^T A).

    Computed through the symmetric eigendecomposition of A^T A, a route
    that never sees the block structure, so agreement with
    :func:`levy_char` on the block angles is a real cross-check.
    """
    a = check_skew(a)
    w = np.linalg.eigvalsh(a.T @ a)
    sigma = np.sqrt(np.clip(w, 0.0, None))
    # det cosh(Sigma T) = prod cosh(sigma_i T); log-space for stability
    log_det = float(np.sum(np.log(np.cosh(sigma * T))))
    return math.exp(-0.5 * log_det)


def riccati_quadratic_reference(nu: float, T: float) -> float:
    """ODE cross-check of E[exp(-(nu^2/2) int_0^T b_s^2 ds)] for 1-D b.

    Solves the Riccati equation phi' = nu^2 - phi^2, phi(0) = 0 together
    with its running integral and returns exp(-(1/2) int_0^T phi).  Used by
    the test suite to validate the cosh closed forms along an independent
    route before they are trusted as oracles.
    """

    def rhs(_t, y):
        phi = y[0]
        return [nu * nu - phi * phi, phi]

    sol = scipy.integrate.solve_ivp(
        rhs, (0.0, T), [0.0, 0.0], rtol=1e-12, atol=1e-14, dense_output=False
    )
    if not sol.success:
        raise OracleError(f"Riccati integration failed: {sol.message}")
    return math.exp(-0.5 * sol.y[1, -1])


# ---------------------------------------------------------------------------
# Conditional density oracle on the three-dimensional Heisenberg group
# ---------------------------------------------------------------------------


def area_char_given_endpoint(x_sq: float, lam: float, T: float) -> float:
    """E[exp(i lam Z_T) | B_T = x] for planar B with |x|^2 = x_sq.

    Equals (u / sinh u) exp(-(|x|^2 / 2T)(u coth u - 1)) with u = lam T / 2.
    Real and even in lam.
    """
    u = 0.5 * abs(lam) * T
    if u < 1e-8:
        ratio = 1.0 / (1.0 + u * u / 6.0)
        coth_term = u * u / 3.0
    else:
        ratio = u / math.sinh(u)
        coth_term = u / math.tanh(u) - 1.0
    return ratio * math.exp(-(x_sq / (2.0 * T)) * coth_term)


def gamma_h3_oracle(x, c: float, T: float) -> float:
    """Conditional fiber density gamma_T(x, c) on the Heisenberg group.

    Fourier inversion of the conditional characteristic function of the
    area given the endpoint:

        gamma_T(x, c) = (1/pi) int_0^inf cos(lam c)
                        * area_char_given_endpoint(|x|^2, lam, T) d lam.

    Raises OracleError if the quadrature does not converge tightly.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x_sq = float(x @ x)
    c = float(np.atleast_1d(np.asarray(c, dtype=float))[0])

    def integrand(lam):
        return math.cos(lam * c) * area_char_given_endpoint(x_sq, lam, T)

    # The integrand decays like lam exp(-lam T / 2); beyond u = 50 it is
    # below 1e-19, so a finite cutoff loses nothing.
    cutoff = 100.0 / T
    val, err = scipy.integrate.quad(
        integrand, 0.0, cutoff, limit=800, epsabs=1e-12, epsrel=1e-11
    )
    if err > max(1e-9, 1e-7 * abs(val)):
        raise OracleError(f"gamma quadrature error {err:.2e} too large")
    return val / math.pi


# ---------------------------------------------------------------------------
# Polynomials and the reduced generator pair
# ---------------------------------------------------------------------------


class GaussPolynomial:
    """Complex-coefficient polynomial on R^N in the graded monomial basis.

    Stored sparsely as ``{exponent_tuple: coefficient}``.  Only the small
    algebra needed by the reduced generators is implemented.
    """

    def __init__(self, n_vars: int, coeffs: dict | None = None):
        self.n_vars = n_vars
        self.coeffs = {}
        for exps, coeff in (coeffs or {}).items():
            if len(exps) != n_vars:
                raise ValueError(f"exponent tuple {exps} has wrong length")
            if coeff != 0:
                self.coeffs[tuple(int(e) for e in exps)] = complex(coeff)

    @classmethod
    def monomial(cls, n_vars: int, exps, coeff=1.0) -> "GaussPolynomial":
        return cls(n_vars, {tuple(exps): coeff})

    @classmethod
    def constant(cls, n_vars: int, value=1.0) -> "GaussPolynomial":
        return cls(n_vars, {(0,) * n_vars: value})

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.coeffs), default=0)

    def coefficient(self, exps) -> complex:
        return self.coeffs.get(tuple(exps), 0.0 + 0.0j)

    def max_abs_coeff(self) -> float:
        return max((abs(v) for v in self.coeffs.values()), default=0.0)

    def __add__(self, other: "GaussPolynomial") -> "GaussPolynomial":
        out = dict(self.coeffs)
        for e, v in other.coeffs.items():
            out[e] = out.get(e, 0.0) + v
        return GaussPolynomial(self.n_vars, out)

    def __sub__(self, other: "GaussPolynomial") -> "GaussPolynomial":
        return self + other.scale(-1.0)

    def scale(self, factor) -> "GaussPolynomial":
        return GaussPolynomial(
            self.n_vars, {e: factor * v for e, v in self.coeffs.items()}
        )

    def derivative(self, var: int) -> "GaussPolynomial":
        out = {}
        for e, v in self.coeffs.items():
            if e[var] > 0:
                ne = list(e)
                ne[var] -= 1
                out[tuple(ne)] = out.get(tuple(ne), 0.0) + v * e[var]
        return GaussPolynomial(self.n_vars, out)

    def times_x(self, var: int) -> "GaussPolynomial":
        out = {}
        for e, v in self.coeffs.items():
            ne = list(e)
            ne[var] += 1
            out[tuple(ne)] = v
        return GaussPolynomial(self.n_vars, out)

    def __call__(self, x) -> complex:
        x = np.asarray(x, dtype=float)
        total = 0.0 + 0.0j
        for e, v in self.coeffs.items():
            total += v * np.prod(x ** np.array(e))
        return complex(total)

    def __repr__(self):
        return f"GaussPolynomial(n_vars={self.n_vars}, terms={len(self.coeffs)})"


def _dot_grad(m, g: GaussPolynomial) -> GaussPolynomial:
    """(M x) . grad g as a polynomial (degree preserving)."""
    out = GaussPolynomial(g.n_vars)
    for b in range(g.n_vars):
        db = g.derivative(b)
        if not db.coeffs:
            continue
        for a in range(g.n_vars):
            if m[b, a] != 0:
                out = out + db.times_x(a).scale(m[b, a])
    return out


def apply_reduced_l(a, g: GaussPolynomial) -> GaussPolynomial:
    """Ground-state transformed radial generator on polynomials.

    L g = (1/2) Lap g - (Sigma x) . grad g - (1/2) tr(Sigma) g with
    Sigma = sqrt(A^T A).  Maps degree <= m to degree <= m.
    """
    a = check_skew(a)
    sigma = ground_state_sigma(a)
    lap = GaussPolynomial(g.n_vars)
    for b in range(g.n_vars):
        lap = lap + g.derivative(b).derivative(b)
    return lap.scale(0.5) - _dot_grad(sigma, g) - g.scale(0.5 * np.trace(sigma))


def apply_reduced_s(a, g: GaussPolynomial) -> GaussPolynomial:
    """Rotation part of the reduced pair: S g = i (A x) . grad g."""
    a = check_skew(a)
    return _dot_grad(a, g).scale(1j)


@lru_cache(maxsize=8)
def _graded_basis(n_vars: int, max_degree: int):
    """All exponent tuples with total degree <= max_degree, graded order."""
    exps = []
    for total in range(max_degree + 1):
        level = [
            e
            for e in _iter_product(range(total + 1), repeat=n_vars)
            if sum(e) == total
        ]
        level.sort()
        exps.extend(level)
    index = {e: i for i, e in enumerate(exps)}
    return exps, index


@lru_cache(maxsize=8)
def _operator_pieces(n_vars: int, max_degree: int):
    """Sparse matrices for x_a d_b and d_b^2 on the graded basis."""
    exps, index = _graded_basis(n_vars, max_degree)
    dim = len(exps)
    earr = np.array(exps)  # (dim, n_vars)

    def lookup(target):
        rows = np.full(target.shape[0], -1)
        for i, e in enumerate(target):
            key = tuple(int(v) for v in e)
            rows[i] = index.get(key, -1)
        return rows

    x_d = {}
    for b in range(n_vars):
        active = earr[:, b] > 0
        for a in range(n_vars):
            target = earr[active].copy()
            target[:, b] -= 1
            target[:, a] += 1
            rows = lookup(target)
            keep = rows >= 0  # degree-preserving, so always found
            cols = np.nonzero(active)[0][keep]
            x_d[a, b] = scipy.sparse.csr_matrix(
                (earr[active, b][keep].astype(float), (rows[keep], cols)),
                shape=(dim, dim),
            )
    d2 = {}
    for b in range(n_vars):
        active = earr[:, b] > 1
        target = earr[active].copy()
        target[:, b] -= 2
        rows = lookup(target)
        cols = np.nonzero(active)[0]
        vals = (earr[active, b] * (earr[active, b] - 1)).astype(float)
        d2[b] = scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(dim, dim))
    return dim, x_d, d2


def commutator_residual(a, max_degree: int) -> float:
    """Max-entry residual of [L, S] on polynomials of degree <= max_degree.

    The reduced radial generator and the rotation generator commute
    exactly (A commutes with sqrt(A^T A)); this measures the numerical
    residual of that identity as sparse operators on the graded basis.
    """
    a = check_skew(a)
    n_vars = a.shape[0]
    sigma = ground_state_sigma(a)
    dim, x_d, d2 = _operator_pieces(n_vars, max_degree)
    ident = scipy.sparse.identity(dim, format="csr")

    def dot_grad_matrix(m):
        out = scipy.sparse.csr_matrix((dim, dim))
        for (va, vb), piece in x_d.items():
            if m[vb, va] != 0.0:
                out = out + m[vb, va] * piece
        return out

    lap = scipy.sparse.csr_matrix((dim, dim))
    for b in range(n_vars):
        lap = lap + d2[b]
    l_mat = 0.5 * lap - dot_grad_matrix(sigma) - 0.5 * np.trace(sigma) * ident
    s_mat = dot_grad_matrix(a)  # the factor i is a scalar; it drops out of [L, S]
    comm = l_mat @ s_mat - s_mat @ l_mat
    return float(np.abs(comm.toarray()).max()) if comm.nnz else 0.0
