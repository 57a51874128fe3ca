"""Heat-kernel disintegration: fiber densities, conditional estimates, sampling.

The endpoint law of the group-valued process factors as a flat Gaussian in
the horizontal slot times a conditional fiber density.  The mixing kernel

    j0(B, c) = exp(-rho^{-1} c . c / 2) / sqrt(det(2 pi rho(B)))

turns path averages of flat Brownian motion into expectations against the
group heat kernel, and conditioning on the endpoint gives the fiber density
``gamma``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.stats

from . import paths as _paths
from .groups import GroupElement, SkewForm
from .mc import STREAM_BLOCK, McEstimate, McSettings, RngStream, run_batches
from .quadratics import levy_z, rho_batch, rho_matrix

PIVOT_REL_TOL = 1e-12


class DegeneratePathError(RuntimeError):
    """A fiber covariance was numerically singular; never regularized silently."""


def cholesky_spd(rho: np.ndarray, rel_tol: float = PIVOT_REL_TOL) -> np.ndarray:
    """Batched Cholesky factor of fiber covariances with a degeneracy gate.

    A factorization whose pivot (squared diagonal entry) falls below
    ``rel_tol * trace / d`` raises DegeneratePathError carrying the batch
    indices; regularizing here would silently bias every density downstream,
    so the caller must decide.
    """
    rho = np.asarray(rho, dtype=float)
    d = rho.shape[-1]
    trace = np.einsum("...ii->...", rho)
    floor = rel_tol * trace / d
    try:
        chol = np.linalg.cholesky(rho)
    except np.linalg.LinAlgError as exc:
        eigs = np.linalg.eigvalsh(rho)
        bad = np.nonzero(np.atleast_1d(eigs[..., 0] <= 0.0))
        raise DegeneratePathError(
            f"fiber covariance not positive definite at indices {bad}"
        ) from exc
    pivots = np.einsum("...ii->...i", chol) ** 2
    bad = pivots < floor[..., None]
    if bad.any():
        idx = np.nonzero(np.atleast_1d(bad.any(axis=-1)))
        raise DegeneratePathError(
            f"fiber covariance pivot below {rel_tol:g} * trace/d at indices {idx}"
        )
    return chol


def log_j0_values(rho: np.ndarray, c) -> np.ndarray:
    """log of the centered Gaussian density N(0, rho) at c, batched.

    ``rho`` has shape (..., d, d), ``c`` broadcasts to (..., d).
    """
    rho = np.asarray(rho, dtype=float)
    c = np.asarray(c, dtype=float)
    d = rho.shape[-1]
    chol = cholesky_spd(rho)
    shape = np.broadcast_shapes(chol.shape[:-2], c.shape[:-1])
    cb = np.broadcast_to(c, shape + (d,))
    chol_b = np.broadcast_to(chol, shape + (d, d))
    y = np.linalg.solve(chol_b, cb[..., None])[..., 0]
    log_det = 2.0 * np.sum(np.log(np.einsum("...ii->...i", chol)), axis=-1)
    return -0.5 * np.einsum("...j,...j->...", y, y) - 0.5 * log_det \
        - 0.5 * d * np.log(2.0 * np.pi)


def j0_values(rho: np.ndarray, c) -> np.ndarray:
    return np.exp(log_j0_values(rho, c))


def j0_density(form: SkewForm, p, c) -> float:
    """Mixing density j0(p, c) for a single sampled path."""
    rho = rho_matrix(form, p).matrix
    return float(j0_values(rho, np.atleast_1d(c)))


def draw_fiber(chol: np.ndarray, gen: np.random.Generator) -> np.ndarray:
    """One c ~ N(0, rho) per path given the Cholesky factors (..., d, d)."""
    xi = gen.standard_normal(chol.shape[:-1])
    return np.einsum("...jk,...k->...j", chol, xi)


def gh_integral(fn, scale: float, dim: int, n_nodes: int = 48) -> float:
    """Gauss-Hermite integral of fn over R^dim with node scale ``scale``.

    Written for integrands close to a centered Gaussian of covariance
    comparable to scale^2 (a single mixing density, say); for mixtures of
    very different widths use a fixed grid instead.
    """
    x, w = np.polynomial.hermite.hermgauss(n_nodes)
    nodes = np.sqrt(2.0) * scale * x
    logw = np.log(w) + x * x + 0.5 * np.log(2.0) + np.log(scale)
    if dim == 1:
        vals = fn(nodes[:, None])
        return float(np.exp(logw) @ vals)
    if dim == 2:
        gx, gy = np.meshgrid(nodes, nodes, indexing="ij")
        pts = np.stack([gx.ravel(), gy.ravel()], axis=-1)
        vals = fn(pts).reshape(n_nodes, n_nodes)
        wts = np.exp(logw)
        return float(wts @ vals @ wts)
    raise ValueError("gh_integral supports dim 1 and 2 only")


@dataclass(frozen=True)
class NuSamples:
    """Endpoint samples (B_T, Z_T) of the group-valued process."""

    w: np.ndarray  # (n, N)
    z: np.ndarray  # (n, d)
    T: float

    def __len__(self):
        return self.w.shape[0]

    def __getitem__(self, i: int) -> GroupElement:
        return GroupElement(self.w[i], self.z[i])


def sample_nu(form: SkewForm, T: float, mc: McSettings) -> NuSamples:
    """Sample endpoints of the group process by integrating the area process."""
    from .mc import collect_batches

    grid = _paths.TimeGrid(T, mc.n_steps)

    def kernel(stream, count):
        batch = _paths.bm_batch(grid, form.dim_w, stream, count)
        return {"w": batch.terminal, "z": levy_z(form, batch)}

    out = collect_batches(mc, kernel)
    return NuSamples(out["w"], out["z"], T)


def gamma_profile(form: SkewForm, T: float, x, c_grid, mc: McSettings) -> dict:
    """Bridge Monte Carlo estimate of the fiber density at fixed x, many c.

    Returns a dict with the c grid, mean estimates, and standard errors.
    All c values share one set of bridges, so the profile is smooth in c.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    c_grid = np.atleast_2d(np.asarray(c_grid, dtype=float))  # (k, d)
    if c_grid.shape[0] == 1 and c_grid.shape[1] > form.dim_c:
        c_grid = c_grid.T
    grid = _paths.TimeGrid(T, mc.n_steps)

    def kernel(stream, count):
        batch = _paths.bridge_batch(grid, form.dim_w, x, stream, count)
        rho = rho_batch(form, batch)
        vals = j0_values(rho[:, None, :, :], c_grid[None, :, :])  # (count, k)
        return {"gamma": vals}

    stats = run_batches(mc, kernel)["gamma"]
    return {
        "c": c_grid,
        "mean": np.atleast_1d(stats.mean),
        "std_error": np.atleast_1d(stats.std_error),
        "n": stats.n,
    }


def gamma_estimate(form: SkewForm, T: float, x, c, mc: McSettings) -> McEstimate:
    """Fiber density estimate gamma_T(x, c) at a single point."""
    c = np.atleast_1d(np.asarray(c, dtype=float))
    prof = gamma_profile(form, T, x, c.reshape(1, -1), mc)
    return McEstimate(
        float(prof["mean"][0]), float(prof["std_error"][0]),
        prof["n"], mc.n_steps, mc.seed,
    )


def expect_via_j0(form: SkewForm, T: float, fn, mc: McSettings) -> McEstimate:
    """E[F(endpoint)] through the mixing identity.

    Draws c ~ N(0, rho(B)) per flat path and averages F(B_T, c); by the
    disintegration this equals the expectation of F under the group
    process endpoint law.  ``fn(x, c)`` may return a scalar or a short
    vector per sample.
    """
    grid = _paths.TimeGrid(T, mc.n_steps)

    def kernel(stream, count):
        gen = stream.generator()
        batch = _paths.bm_batch(grid, form.dim_w, gen, count)
        chol = cholesky_spd(rho_batch(form, batch))
        c = draw_fiber(chol, gen)
        return {"value": fn(batch.terminal, c)}

    return run_batches(mc, kernel)["value"].estimate(mc)


# ---------------------------------------------------------------------------
# Distributional symmetry battery
# ---------------------------------------------------------------------------


@dataclass
class ProjectionRow:
    name: str
    statistic: float
    p_value: float


@dataclass
class InversionReport:
    """Two-sample KS battery comparing endpoint law with its inverse's law."""

    rows: list
    control_rows: list
    n: int
    threshold: float

    @property
    def min_p(self) -> float:
        return min(r.p_value for r in self.rows)

    @property
    def control_min_p(self) -> float:
        return min(r.p_value for r in self.control_rows)

    @property
    def passed(self) -> bool:
        inversion_ok = all(r.p_value > self.threshold for r in self.rows)
        control_broken = self.control_min_p <= self.threshold
        return inversion_ok and control_broken


def _projections(form: SkewForm, seed: int):
    mix_gen = RngStream(seed, 7 * STREAM_BLOCK).generator()
    projs = []
    for i in range(form.dim_w):
        projs.append((f"w{i + 1}", lambda s, i=i: s.w[:, i]))
    for j in range(form.dim_c):
        projs.append((f"z{j + 1}", lambda s, j=j: s.z[:, j]))
    projs.append(("|w|", lambda s: np.linalg.norm(s.w, axis=1)))
    for k in range(2):
        u = mix_gen.standard_normal(form.dim_w)
        v = mix_gen.standard_normal(form.dim_c)
        projs.append(
            (f"mix{k + 1}", lambda s, u=u, v=v: s.w @ u + s.z @ v)
        )
    return projs


def inversion_check(form: SkewForm, T: float, mc: McSettings,
                    threshold: float = 1e-3) -> InversionReport:
    """KS battery for endpoint-law inversion invariance, with a broken control.

    Sample A and an independent sample B are drawn on disjoint stream
    blocks; every projection of A is compared against the same projection
    of the pointwise group inverse of B.  The control repeats the battery
    against samples run to time 1.1 T, which must fail decisively.
    """
    sample_a = sample_nu(form, T, mc)
    sample_b = sample_nu(form, T, mc.shifted(STREAM_BLOCK))
    inverse_b = NuSamples(-sample_b.w, -sample_b.z, T)
    control = sample_nu(form, 1.1 * T, mc.shifted(2 * STREAM_BLOCK))

    rows, control_rows = [], []
    for name, proj in _projections(form, mc.seed):
        res = scipy.stats.ks_2samp(proj(sample_a), proj(inverse_b))
        rows.append(ProjectionRow(name, float(res.statistic), float(res.pvalue)))
        res_c = scipy.stats.ks_2samp(proj(sample_a), proj(control))
        control_rows.append(
            ProjectionRow(name, float(res_c.statistic), float(res_c.pvalue))
        )
    return InversionReport(rows, control_rows, len(sample_a), threshold)
