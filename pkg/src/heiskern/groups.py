"""Step-2 nilpotent group algebra: skew forms, group law, invariant derivatives.

The state space is ``G = R^N x R^d`` with product

    (w1, c1) . (w2, c2) = (w1 + w2, c1 + c2 + omega(w1, w2) / 2)

for a vector-valued skew form ``omega``.  Everything downstream (area
processes, fiber covariances, translation weights) is driven by the tables
stored in :class:`SkewForm`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


class FormError(ValueError):
    """A skew-form table failed validation."""


_SKEW_TOL = 1e-12


class SkewForm:
    """Skew bilinear form omega: R^N x R^N -> R^d given by coefficient tables.

    Parameters
    ----------
    tables : array_like, shape (d, N, N)
        ``tables[j, i, k]`` is the j-th component of ``omega(e_i, e_k)``.
        Each slice must be antisymmetric.

    Notes
    -----
    The component tables are the *form* coefficients.  The linear operator
    ``Omega_lam`` on R^N paired against a dual vector ``lam`` in R^d is
    defined by ``<Omega_lam h, k> = omega(h, k) . lam`` and is therefore
    built from the transposed tables (see :meth:`operator`).  On the
    three-dimensional Heisenberg group the table is ``[[0, 1], [-1, 0]]``
    and ``Omega_1`` rotates ``e1 -> e2, e2 -> -e1``.

    Raises
    ------
    FormError
        If a table is not antisymmetric, or the form fails the surjectivity
        (full rank) condition that the vectors ``omega(e_i, e_k)``, i < k,
        span R^d.
    """

    def __init__(self, tables):
        tables = np.array(tables, dtype=float)
        if tables.ndim != 3 or tables.shape[1] != tables.shape[2]:
            raise FormError(f"tables must have shape (d, N, N), got {tables.shape}")
        scale = max(np.abs(tables).max(), 1.0)
        skew_residual = np.abs(tables + np.swapaxes(tables, 1, 2)).max()
        if skew_residual > _SKEW_TOL * scale:
            raise FormError(
                f"tables are not antisymmetric: residual {skew_residual:.3e} "
                f"exceeds {_SKEW_TOL:.0e} * {scale:.3e}"
            )
        d, n = tables.shape[0], tables.shape[1]
        iu, ku = np.triu_indices(n, k=1)
        span = tables[:, iu, ku].T  # (n*(n-1)/2, d) vectors omega(e_i, e_k)
        if span.size == 0 or np.linalg.matrix_rank(span) < d:
            raise FormError(
                "form is not surjective: the vectors omega(e_i, e_k), i < k, "
                f"do not span R^{d}"
            )
        tables.setflags(write=False)
        self.tables = tables
        self.dim_w = n
        self.dim_c = d
        ops = -tables.copy()  # operator for lam = e_j is the transposed table
        ops.setflags(write=False)
        self.operators = ops

    @classmethod
    def heisenberg3(cls) -> "SkewForm":
        """The three-dimensional Heisenberg group: N = 2, d = 1."""
        return cls([[[0.0, 1.0], [-1.0, 0.0]]])

    @classmethod
    def from_json(cls, text: str) -> "SkewForm":
        data = json.loads(text)
        tables = np.array(data["omegas"], dtype=float)
        form = cls(tables)
        if form.dim_w != data["dim_w"] or form.dim_c != data["dim_c"]:
            raise FormError(
                f"declared dims ({data['dim_w']}, {data['dim_c']}) do not match "
                f"tables of shape {tables.shape}"
            )
        return form

    def to_json(self) -> str:
        return json.dumps(
            {
                "dim_w": self.dim_w,
                "dim_c": self.dim_c,
                "omegas": [t.tolist() for t in self.tables],
            }
        )

    def __repr__(self):
        return f"SkewForm(dim_w={self.dim_w}, dim_c={self.dim_c})"

    def omega(self, w1, w2):
        """Evaluate omega(w1, w2), broadcasting over leading axes.

        Accepts inputs of shape ``(..., N)`` and returns ``(..., d)``.
        """
        w1 = np.asarray(w1, dtype=float)
        w2 = np.asarray(w2, dtype=float)
        return np.einsum("jik,...i,...k->...j", self.tables, w1, w2)

    def operator(self, lam):
        """The skew operator Omega_lam with <Omega_lam h, k> = omega(h, k).lam."""
        lam = np.asarray(lam, dtype=float)
        if lam.shape != (self.dim_c,):
            raise FormError(f"lam must have shape ({self.dim_c},), got {lam.shape}")
        return np.einsum("j,jik->ik", lam, self.operators)


def omega_eval(form: SkewForm, w1, w2):
    """omega(w1, w2) as a length-d vector (see SkewForm.omega)."""
    return form.omega(w1, w2)


def omega_lambda(form: SkewForm, lam):
    """Skew operator on R^N pairing the form against a dual vector lam."""
    return form.operator(lam)


def omega_h_extension(form: SkewForm, h, w):
    """The form evaluated with a Cameron-Martin endpoint in the first slot.

    Finite-energy directions enter the algebra only through their endpoint,
    so this is the same coefficient table applied to (h, w).
    """
    return form.omega(h, w)


@dataclass(frozen=True)
class GroupElement:
    """A point (w, c) of G, also used for directions (h, z) in the flat fiber."""

    w: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w", np.atleast_1d(np.asarray(self.w, dtype=float)))
        object.__setattr__(self, "c", np.atleast_1d(np.asarray(self.c, dtype=float)))

    def scaled(self, t: float) -> "GroupElement":
        """Scalar scaling of the underlying vector space (not a group map)."""
        return GroupElement(t * self.w, t * self.c)


def group_mul(form: SkewForm, g1: GroupElement, g2: GroupElement) -> GroupElement:
    half_omega = 0.5 * form.omega(g1.w, g2.w)
    return GroupElement(g1.w + g2.w, g1.c + g2.c + half_omega)


def group_inv(g: GroupElement) -> GroupElement:
    # With the symmetrized group law the inverse is plain negation:
    # omega(w, -w) = 0 kills the correction term.
    return GroupElement(-g.w, -g.c)


def identity(form: SkewForm) -> GroupElement:
    return GroupElement(np.zeros(form.dim_w), np.zeros(form.dim_c))


def hs_norm(a) -> float:
    """Hilbert-Schmidt (Frobenius) norm of a matrix."""
    return float(np.linalg.norm(np.asarray(a, dtype=float)))


class CylinderFunction:
    """A function F(x, c) of the endpoint, with optional analytic gradient.

    Parameters
    ----------
    name : str
    fn : callable
        ``fn(x, c) -> values`` with x of shape (..., N), c of shape (..., d),
        broadcasting over leading axes.
    grad : callable, optional
        ``grad(x, c) -> (gx, gc)`` with shapes matching x and c.
    growth : tuple, optional
        (K, M) with |F(x, c)| <= K (1 + |x| + |c|)^M, recorded for report
        metadata only.
    """

    def __init__(self, name, fn, grad=None, growth=None):
        self.name = name
        self.fn = fn
        self.grad = grad
        self.growth = growth

    def __call__(self, x, c):
        return self.fn(np.asarray(x, dtype=float), np.asarray(c, dtype=float))

    def gradient(self, x, c):
        if self.grad is None:
            raise ValueError(f"cylinder function {self.name!r} has no gradient")
        return self.grad(np.asarray(x, dtype=float), np.asarray(c, dtype=float))

    def with_fd_gradient(self, step=1e-6) -> "CylinderFunction":
        """Copy with a central finite-difference gradient (for tests)."""

        def grad(x, c):
            x = np.asarray(x, dtype=float)
            c = np.asarray(c, dtype=float)
            gx = np.empty_like(x)
            for i in range(x.shape[-1]):
                e = np.zeros(x.shape[-1])
                e[i] = step
                gx[..., i] = (self.fn(x + e, c) - self.fn(x - e, c)) / (2 * step)
            gc = np.empty_like(c)
            for j in range(c.shape[-1]):
                e = np.zeros(c.shape[-1])
                e[j] = step
                gc[..., j] = (self.fn(x, c + e) - self.fn(x, c - e)) / (2 * step)
            return gx, gc

        return CylinderFunction(self.name + "_fd", self.fn, grad, self.growth)


def tilde_x_values(form: SkewForm, x_dir: GroupElement, fun: CylinderFunction, w, c):
    """Left-invariant derivative of a cylinder function, batched over (w, c).

    The direction (h, z) acts at the point (w, c) along
    ``(h, z + omega(w, h) / 2)``.
    """
    gx, gc = fun.gradient(w, c)
    fiber = x_dir.c + 0.5 * form.omega(w, x_dir.w)
    return gx @ x_dir.w + np.einsum("...j,...j->...", gc, fiber)


def hat_x_values(form: SkewForm, x_dir: GroupElement, fun: CylinderFunction, w, c):
    """Right-invariant derivative: the fiber correction enters with a minus."""
    gx, gc = fun.gradient(w, c)
    fiber = x_dir.c - 0.5 * form.omega(w, x_dir.w)
    return gx @ x_dir.w + np.einsum("...j,...j->...", gc, fiber)


def tilde_x_apply(form: SkewForm, x_dir: GroupElement, fun: CylinderFunction,
                  g: GroupElement) -> float:
    """Left-invariant derivative at a single group point."""
    return float(tilde_x_values(form, x_dir, fun, g.w, g.c))


def hat_x_apply(form: SkewForm, x_dir: GroupElement, fun: CylinderFunction,
                g: GroupElement) -> float:
    """Right-invariant derivative at a single group point."""
    return float(hat_x_values(form, x_dir, fun, g.w, g.c))
