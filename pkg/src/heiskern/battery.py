"""Standard test functions, fiber functionals, and directions for experiments.

Cylinder functions carry analytic gradients so the m = 1 derivative sides
are exact; the growth tags (K, M) record the polynomial envelope
|F| <= K (1 + |x| + |c|)^M used in report metadata.
"""

from __future__ import annotations

import numpy as np

from .groups import CylinderFunction, GroupElement, SkewForm
from .calculus import ShiftableFunctional
from .quadratics import rho_values


def unit_function(form: SkewForm) -> CylinderFunction:
    def fn(x, c):
        return np.ones(np.broadcast_shapes(x.shape[:-1], c.shape[:-1]))

    def grad(x, c):
        return np.zeros_like(x), np.zeros_like(c)

    return CylinderFunction("one", fn, grad, growth=(1.0, 0))


def linear_fiber(form: SkewForm, v=None) -> CylinderFunction:
    """F(x, c) = <v, c>: the exact-case probe for integration by parts."""
    v = np.ones(form.dim_c) if v is None else np.asarray(v, dtype=float)

    def fn(x, c):
        return c @ v

    def grad(x, c):
        gx = np.zeros_like(x)
        gc = np.broadcast_to(v, c.shape).copy()
        return gx, gc

    return CylinderFunction("linear_fiber", fn, grad, growth=(float(np.abs(v).sum()), 1))


def gauss_bump(form: SkewForm) -> CylinderFunction:
    """Bounded smooth bump exp(-(|x|^2 + |c|^2)/2)."""

    def fn(x, c):
        sq = np.einsum("...a,...a->...", x, x) + np.einsum("...j,...j->...", c, c)
        return np.exp(-0.5 * sq)

    def grad(x, c):
        f = fn(x, c)
        return -x * f[..., None], -c * f[..., None]

    return CylinderFunction("gauss_bump", fn, grad, growth=(1.0, 0))


def poly_mix(form: SkewForm) -> CylinderFunction:
    """F(x, c) = x_1^2 c_1 + x_1: unbounded with polynomial growth."""

    def fn(x, c):
        return x[..., 0] ** 2 * c[..., 0] + x[..., 0]

    def grad(x, c):
        gx = np.zeros_like(x)
        gx[..., 0] = 2.0 * x[..., 0] * c[..., 0] + 1.0
        gc = np.zeros_like(c)
        gc[..., 0] = x[..., 0] ** 2
        return gx, gc

    return CylinderFunction("poly_mix", fn, grad, growth=(1.0, 3))


def cylinder_battery(form: SkewForm) -> list:
    return [linear_fiber(form), gauss_bump(form), poly_mix(form)]


def direction_battery(form: SkewForm) -> list:
    """Two Cameron-Martin directions that do not commute on the group."""
    e1 = np.zeros(form.dim_w)
    e1[0] = 1.0
    e2 = np.zeros(form.dim_w)
    e2[min(1, form.dim_w - 1)] = 1.0
    z1 = np.full(form.dim_c, 0.2)
    z2 = np.full(form.dim_c, -0.1)
    return [GroupElement(e1, z1), GroupElement(0.7 * e2 + 0.3 * e1, z2)]


def psi_trace(form: SkewForm) -> ShiftableFunctional:
    """Psi(B, c) = tr(rho(B)): a path functional constant in c."""

    def ev(form_, grid, p_values, c):
        rho = rho_values(form_, grid.dt, p_values)
        vals = np.einsum("...jj->...", rho)
        return np.broadcast_to(
            vals, np.broadcast_shapes(vals.shape, c.shape[:-1])
        )

    return ShiftableFunctional("trace_rho", ev)


def psi_fiber_quad(form: SkewForm) -> ShiftableFunctional:
    """Psi(B, c) = 1 + <c, c>: couples the fiber draw to the shift rule."""

    def ev(form_, grid, p_values, c):
        vals = 1.0 + np.einsum("...j,...j->...", c, c)
        return np.broadcast_to(
            vals, np.broadcast_shapes(vals.shape, p_values.shape[:-2])
        )

    return ShiftableFunctional("one_plus_c_sq", ev)


def psi_battery(form: SkewForm) -> list:
    return [ShiftableFunctional.one(), psi_trace(form), psi_fiber_quad(form)]
