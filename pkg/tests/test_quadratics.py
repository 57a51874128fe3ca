"""Stochastic-integral layer: Ito sums, signed areas, energies, covariance.

The frozen constants below come from closed forms evaluated by the
oracle module (hyperbolic secant characteristic function, explicit
covariance of the signed area). Monte Carlo results must land within
a few standard errors of them.
"""

import math

import numpy as np
import pytest

from heiskern.groups import SkewForm
from heiskern.mc import McSettings, RngStream
from heiskern.oracles import exp_quadratic_oracle, riccati_quadratic_reference
from heiskern.paths import TimeGrid, bm_batch, drift_path
from heiskern.quadratics import (area_covariance_exact, check_skew,
                                 ito_integral, ito_second_moment, levy_z,
                                 quadratic_energy, rho_batch, rho_matrix,
                                 rho_values, yor_gap)

# value of sech(1) = E[exp(i * area)] for the standard 2d rotation
# generator at T = 1, frozen from two independent oracle routes
SECH_ONE = 0.6480542736638855


def h3_area_matrix():
    return np.array([[0.0, 1.0], [-1.0, 0.0]])


class TestCheckSkew:
    def test_accepts_skew(self):
        check_skew(h3_area_matrix())

    def test_rejects_symmetric(self):
        with pytest.raises(ValueError):
            check_skew(np.eye(2))


class TestItoIntegral:
    def test_zero_matrix_gives_zero(self):
        batch = bm_batch(TimeGrid(1.0, 32), 2, RngStream(1, 0), 16)
        vals = ito_integral(np.zeros((2, 2)), batch)
        assert np.all(vals == 0.0)

    def test_martingale_mean_zero(self):
        batch = bm_batch(TimeGrid(1.0, 256), 2, RngStream(2, 0), 40000)
        vals = ito_integral(h3_area_matrix(), batch)
        se = vals.std(ddof=1) / math.sqrt(len(vals))
        assert abs(vals.mean()) < 4 * se

    def test_second_moment_formula(self):
        # E M_T^2 = T^2 ||A||_HS^2 / 2 for the midpoint-free left sum
        a = np.array([[0.0, 2.0], [-2.0, 0.0]])
        T = 1.5
        batch = bm_batch(TimeGrid(T, 512), 2, RngStream(3, 0), 60000)
        vals = ito_integral(a, batch)
        m2 = (vals * vals).mean()
        exact = ito_second_moment(a, T)
        assert exact == pytest.approx(T**2 * 8 / 2)
        se = (vals * vals).std(ddof=1) / math.sqrt(len(vals))
        assert m2 == pytest.approx(exact, abs=4 * se + 0.1)

    def test_single_path_matches_batch_row(self):
        batch = bm_batch(TimeGrid(1.0, 64), 2, RngStream(4, 0), 5)
        a = h3_area_matrix()
        whole = ito_integral(a, batch)
        one = ito_integral(a, batch.path(2))
        assert one == pytest.approx(whole[2])


class TestLevyArea:
    def test_matches_explicit_h3_formula(self, h3):
        batch = bm_batch(TimeGrid(1.0, 128), 2, RngStream(5, 0), 200)
        z = levy_z(h3, batch)[:, 0]
        left = batch.values[:, :-1, :]
        inc = np.diff(batch.values, axis=1)
        direct = 0.5 * ((left[:, :, 0] * inc[:, :, 1]).sum(axis=1)
                        - (left[:, :, 1] * inc[:, :, 0]).sum(axis=1))
        assert z == pytest.approx(direct, rel=1e-12)

    def test_mean_zero_and_variance(self, h3):
        T = 2.0
        batch = bm_batch(TimeGrid(T, 256), 2, RngStream(6, 0), 60000)
        z = levy_z(h3, batch)[:, 0]
        exact_var = area_covariance_exact(h3, T)[0, 0]
        assert exact_var == pytest.approx(T**2 / 4)
        se = z.std(ddof=1) / math.sqrt(len(z))
        assert abs(z.mean()) < 4 * se
        v = z.var(ddof=1)
        v_se = v * math.sqrt(2.0 / len(z))
        assert v == pytest.approx(exact_var, abs=4 * v_se + 0.01)

    def test_covariance_exact_formula(self, form42):
        T = 1.0
        exact = area_covariance_exact(form42, T)
        assert exact.shape == (2, 2)
        assert exact == pytest.approx(exact.T)
        # brute force from definition
        ops = form42.operators
        brute = np.zeros((2, 2))
        for j in range(2):
            for k in range(2):
                brute[j, k] = T**2 / 8 * np.sum(ops[j] * ops[k])
        assert exact == pytest.approx(brute)

    def test_area_vanishes_on_straight_line(self, h3):
        grid = TimeGrid(1.0, 32)
        line = drift_path(grid, [1.0, 2.0])
        z = levy_z(h3, line)
        assert z == pytest.approx([0.0], abs=1e-14)


class TestEnergyAndRho:
    def test_energy_of_line(self):
        grid = TimeGrid(2.0, 1000)
        line = drift_path(grid, [3.0, 4.0])
        # integral of |l(t)|^2 = 6.25 t^2 over [0, 2] is 50/3
        assert quadratic_energy(np.eye(2), line) == pytest.approx(50.0 / 3.0,
                                                                  rel=3e-3)

    def test_rho_of_line_explicit(self, h3):
        grid = TimeGrid(1.0, 2000)
        line = drift_path(grid, [1.0, 0.0])
        rho = rho_matrix(h3, line).matrix
        # Omega_1 maps the line l(t) = (t, 0) to (0, t); the quarter
        # integral of |(0,t)|^2 over [0,1] is 1/12
        assert rho[0, 0] == pytest.approx(1.0 / 12.0, rel=1e-3)

    def test_rho_symmetric_psd(self, form42):
        batch = bm_batch(TimeGrid(1.0, 64), 4, RngStream(7, 0), 50)
        rhos = rho_batch(form42, batch)
        assert rhos.shape == (50, 2, 2)
        assert rhos == pytest.approx(np.swapaxes(rhos, -1, -2))
        eig = np.linalg.eigvalsh(rhos)
        assert np.all(eig > -1e-14)

    def test_cross_rho_bilinear(self, h3):
        grid = TimeGrid(1.0, 64)
        p = bm_batch(grid, 2, RngStream(8, 0), 10)
        q_vals = 2.0 * p.values
        rho_pq = rho_values(h3, grid.dt, p.values, q_vals)
        rho_pp = rho_values(h3, grid.dt, p.values)
        assert rho_pq == pytest.approx(2.0 * rho_pp, rel=1e-12)


class TestOscillatoryIdentity:
    def test_sech_frozen_value(self):
        # two independent analytic routes agree with the frozen constant
        assert exp_quadratic_oracle(h3_area_matrix(), 1.0) == pytest.approx(
            SECH_ONE, rel=1e-13
        )
        # the Riccati route gives the per-mode factor cosh(nu T)^(-1/2);
        # the rotation generator has the singular value 1 twice
        assert riccati_quadratic_reference(1.0, 1.0) ** 2 == pytest.approx(
            SECH_ONE, rel=1e-10
        )
        assert 1.0 / math.cosh(1.0) == pytest.approx(SECH_ONE, rel=1e-15)

    def test_mc_matches_sech(self):
        mc = McSettings(n_paths=40000, n_steps=256, seed=21)
        stats = yor_gap(h3_area_matrix(), lambda x: np.ones(len(x)), 1.0, mc)
        gap = stats["gap"]
        tol = 3 * gap.std_error + abs(stats["gap_coarse"].mean - gap.mean)
        assert abs(gap.mean) <= tol
        assert stats["lhs_re"].mean == pytest.approx(SECH_ONE, abs=0.01)
        assert abs(stats["lhs_im"].mean) <= 3 * stats["lhs_im"].std_error

    def test_gap_with_bounded_functional(self):
        def f(x):
            return np.cos(x[:, 0]) * np.exp(-0.5 * x[:, 1] ** 2)

        mc = McSettings(n_paths=30000, n_steps=128, seed=22)
        stats = yor_gap(h3_area_matrix(), f, 1.0, mc)
        gap = stats["gap"]
        tol = 3 * gap.std_error + abs(stats["gap_coarse"].mean - gap.mean)
        assert abs(gap.mean) <= tol

    def test_rejects_non_skew(self):
        mc = McSettings(n_paths=100, n_steps=8, seed=1)
        with pytest.raises(ValueError):
            yor_gap(np.eye(2), lambda x: np.ones(len(x)), 1.0, mc)
