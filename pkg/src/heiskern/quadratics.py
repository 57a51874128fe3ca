"""Ito integrals, area processes, quadratic energies, and fiber covariances.

Discretization convention: every stochastic integral uses left-point sums,
every time integral uses left-point rectangles.  That is the convention the
distributional identities downstream are exact for in the limit, with O(dt)
weak bias on the grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import paths as _paths
from .groups import SkewForm, hs_norm
from .mc import McEstimate, McSettings, run_batches


def _split(values):
    """Left points and forward increments along the time axis."""
    left = values[..., :-1, :]
    inc = np.diff(values, axis=-2)
    return left, inc


def check_skew(a, tol: float = 1e-12) -> np.ndarray:
    """Validate that a matrix is antisymmetric; returns it as ndarray."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = max(np.abs(a).max(), 1.0)
    residual = np.abs(a + a.T).max()
    if residual > tol * scale:
        raise ValueError(
            f"matrix is not antisymmetric: residual {residual:.3e}"
        )
    return a


def ito_integral(a, p):
    """Left-point Ito sum of <A p, dp> along the path.

    Parameters
    ----------
    a : (N, N) array_like
    p : SampledPath or PathBatch

    Returns
    -------
    float or ndarray
        One value per path.
    """
    a = np.asarray(a, dtype=float)
    left, inc = _split(p.values)
    vals = np.einsum("...ka,ab,...kb->...", inc, a, left)
    return float(vals) if vals.ndim == 0 else vals


def levy_z(form: SkewForm, p):
    """Discrete area process endpoint: Z_T = sum omega(B_left, dB) / 2.

    Returns an array of shape (d,) for a single path, (count, d) for a
    batch.  On the three-dimensional Heisenberg group this is the classical
    signed area (B1 dB2 - B2 dB1) / 2.
    """
    left, inc = _split(p.values)
    return 0.5 * np.einsum("jik,...mi,...mk->...j", form.tables, left, inc)


def quadratic_energy(a, p):
    """Left-point rectangle rule for the time integral of |A p(s)|^2."""
    a = np.asarray(a, dtype=float)
    left = p.values[..., :-1, :]
    ap = np.einsum("ab,...kb->...ka", a, left)
    vals = p.grid.dt * np.einsum("...ka,...ka->...", ap, ap)
    return float(vals) if vals.ndim == 0 else vals


def rho_values(form: SkewForm, dt: float, p_values, q_values=None) -> np.ndarray:
    """Fiber covariance matrix of two paths (batched core).

    Computes the d x d matrix with entries

        rho[j, k] = (1/4) int_0^T <Omega_j p(s), Omega_k q(s)> ds

    by the left-point rectangle rule, where Omega_j is the skew operator of
    the j-th fiber coordinate.  ``p_values`` may have shape (n+1, N) or
    (count, n+1, N); the result has matching leading axes.
    """
    pl = p_values[..., :-1, :]
    op_p = np.einsum("jab,...mb->...jma", form.operators, pl)
    if q_values is None:
        op_q = op_p
    else:
        ql = q_values[..., :-1, :]
        op_q = np.einsum("kab,...mb->...kma", form.operators, ql)
    return 0.25 * dt * np.einsum("...jma,...kma->...jk", op_p, op_q)


@dataclass(frozen=True)
class RhoMatrix:
    """The d x d fiber covariance of a path pair over [0, T]."""

    matrix: np.ndarray
    T: float

    def __post_init__(self):
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=float))


def rho_matrix(form: SkewForm, p, q=None) -> RhoMatrix:
    """Fiber covariance as a RhoMatrix; rho(p, q).T == rho(q, p)."""
    qv = None if q is None else q.values
    return RhoMatrix(rho_values(form, p.grid.dt, p.values, qv), p.grid.T)


def rho_batch(form: SkewForm, p, q=None) -> np.ndarray:
    """Fiber covariances for a PathBatch, shape (count, d, d)."""
    qv = None if q is None else q.values
    return rho_values(form, p.grid.dt, p.values, qv)


def ito_second_moment(a, T: float) -> float:
    """Exact second moment of the Ito integral of <A B, dB> for skew A.

    Derived from the Ito isometry: E |M_T|^2 = (T^2 / 2) ||A||_HS^2.
    """
    check_skew(a)
    return 0.5 * T * T * hs_norm(a) ** 2


def area_covariance_exact(form: SkewForm, T: float) -> np.ndarray:
    """Exact covariance of the area endpoint: E[Z_j Z_k] = (T^2/8) tr(O_j^T O_k).

    Follows from E[Z Z^T | B] = rho and E rho = (T^2/8) Gram(Omega); used
    as the derived oracle for the diffusive scaling law Z_T =law= T Z_1.
    """
    gram = np.einsum("jab,kab->jk", form.operators, form.operators)
    return (T * T / 8.0) * gram


def yor_gap(a, f, T: float, mc: McSettings, form: SkewForm | None = None) -> dict:
    """Compare the oscillatory and damped sides of the quadratic identity.

    For skew A and bounded f, the target identity is

        E[f(B_T) exp(i M_T)] = E[f(B_T) exp(-(1/2) int |A B|^2 dt)],

    with M_T the Ito integral of <A B, dB>.  Both sides are estimated on
    common paths; the per-path difference of the real parts gives a paired
    gap estimate.  Half-resolution copies of the same paths give a
    step-size bias calibration (key suffix ``_coarse``).

    Returns
    -------
    dict
        McEstimates under keys ``lhs_re``, ``lhs_im``, ``rhs``, ``gap``
        plus the coarse-grid variants.
    """
    a = check_skew(a)
    dim = a.shape[0]
    grid = _paths.TimeGrid(T, mc.n_steps)
    if f is None:
        f = lambda x: np.ones(x.shape[0])

    def kernel(stream, count):
        batch = _paths.bm_batch(grid, dim, stream, count)
        out = {}
        for tag, b in (("", batch), ("_coarse", batch.coarsened())):
            m = ito_integral(a, b)
            energy = quadratic_energy(a, b)
            fb = np.asarray(f(b.terminal), dtype=float)
            lhs_re = fb * np.cos(m)
            rhs = fb * np.exp(-0.5 * energy)
            out["lhs_re" + tag] = lhs_re
            out["lhs_im" + tag] = fb * np.sin(m)
            out["rhs" + tag] = rhs
            out["gap" + tag] = lhs_re - rhs
        return out

    stats = run_batches(mc, kernel)
    return {name: s.estimate(mc) for name, s in stats.items()}
