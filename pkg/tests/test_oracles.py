"""Analytic reference layer.

These tests pin the closed forms against each other: the hyperbolic
characteristic function against the Riccati ODE, block rotation angles
against singular values, the fiber-density integral against explicit
H3 values, and the reduced generator pair against hand-computed
polynomial images.
"""

import math

import numpy as np
import pytest
from scipy.integrate import simpson

from heiskern.oracles import (GaussPolynomial, OracleError,
                              apply_reduced_l, apply_reduced_s,
                              area_char_given_endpoint, commutator_residual,
                              exp_quadratic_oracle, gamma_h3_oracle,
                              ground_state_sigma, levy_char,
                              quasi_diagonalize, riccati_quadratic_reference)
from tests.conftest import random_skew

SECH_ONE = 0.6480542736638855


class TestQuasiDiagonalize:
    @pytest.mark.parametrize("n", [2, 3, 4, 5, 8])
    def test_reconstruction_and_orthogonality(self, rng, n):
        a = random_skew(rng, n)
        qd = quasi_diagonalize(a)
        assert qd.q @ qd.q.T == pytest.approx(np.eye(n), abs=1e-12)
        assert qd.reconstruct() == pytest.approx(a, abs=1e-10)

    def test_angles_match_singular_values(self, rng):
        a = random_skew(rng, 6)
        qd = quasi_diagonalize(a)
        sv = np.linalg.svd(a, compute_uv=False)
        paired = np.sort(np.concatenate([qd.angles, qd.angles]))[::-1]
        assert paired == pytest.approx(sv[: len(paired)], abs=1e-10)
        assert np.all(np.diff(qd.angles) <= 1e-14)
        assert np.all(qd.angles > 0)

    def test_odd_dimension_has_zero_block(self, rng):
        a = random_skew(rng, 5)
        qd = quasi_diagonalize(a)
        assert qd.zero_dim >= 1
        assert 2 * len(qd.angles) + qd.zero_dim == 5

    def test_exact_rotation_block(self):
        a = np.array([[0.0, 2.5], [-2.5, 0.0]])
        qd = quasi_diagonalize(a)
        assert qd.angles == pytest.approx([2.5])
        assert qd.zero_dim == 0

    def test_rejects_non_skew(self):
        with pytest.raises(ValueError):
            quasi_diagonalize(np.eye(3))


class TestGroundStateSigma:
    def test_square_is_gram_matrix(self, rng):
        a = random_skew(rng, 4)
        s = ground_state_sigma(a)
        assert s == pytest.approx(s.T, abs=1e-12)
        assert np.linalg.eigvalsh(s).min() >= -1e-12
        assert s @ s == pytest.approx(a.T @ a, abs=1e-10)

    def test_rotation_case_is_identity(self):
        a = np.array([[0.0, 1.0], [-1.0, 0.0]])
        assert ground_state_sigma(a) == pytest.approx(np.eye(2), abs=1e-13)


class TestHyperbolicCharacteristic:
    def test_levy_char_is_product_of_sech(self):
        assert levy_char([1.0], 1.0) == pytest.approx(SECH_ONE, rel=1e-14)
        assert levy_char([1.0, 2.0], 0.7) == pytest.approx(
            1.0 / (math.cosh(0.7) * math.cosh(1.4)), rel=1e-14
        )

    def test_exp_quadratic_matches_levy_char(self, rng):
        a = random_skew(rng, 6)
        qd = quasi_diagonalize(a)
        # each rotation block contributes its angle twice to the singular
        # values, which halves the exponent: one sech factor per block
        direct = exp_quadratic_oracle(a, 1.3)
        assert direct == pytest.approx(levy_char(qd.angles, 1.3), rel=1e-10)

    @pytest.mark.parametrize("nu,T", [(1.0, 1.0), (0.5, 2.0), (2.0, 0.3)])
    def test_riccati_ode_agrees_with_closed_form(self, nu, T):
        ode = riccati_quadratic_reference(nu, T)
        closed = 1.0 / math.sqrt(math.cosh(nu * T))
        assert ode == pytest.approx(closed, rel=1e-9)

    def test_zero_matrix_gives_one(self):
        assert exp_quadratic_oracle(np.zeros((3, 3)), 2.0) == pytest.approx(
            1.0
        )


class TestEndpointCharacteristic:
    def test_lambda_zero_is_one(self):
        assert area_char_given_endpoint(0.7, 0.0, 1.0) == pytest.approx(1.0)

    def test_decay_in_lambda(self):
        vals = [area_char_given_endpoint(0.0, lam, 1.0)
                for lam in (0.5, 1.0, 2.0, 4.0, 20.0)]
        assert all(v1 > v2 for v1, v2 in zip(vals, vals[1:]))
        assert vals[-1] < 0.01

    def test_small_u_expansion_continuous(self):
        near = area_char_given_endpoint(1.0, 1e-9, 1.0)
        assert near == pytest.approx(1.0, abs=1e-8)


class TestFiberDensity:
    def test_origin_value_is_half_pi(self):
        assert gamma_h3_oracle([0.0, 0.0], 0.0, 1.0) == pytest.approx(
            math.pi / 2.0, rel=1e-10
        )

    def test_even_in_fiber(self):
        x = [0.3, -0.4]
        a = gamma_h3_oracle(x, 0.8, 1.0)
        b = gamma_h3_oracle(x, -0.8, 1.0)
        assert a == pytest.approx(b, rel=1e-10)

    def test_depends_on_x_through_norm(self):
        a = gamma_h3_oracle([0.5, 0.0], 0.3, 1.0)
        b = gamma_h3_oracle([0.3, 0.4], 0.3, 1.0)
        assert a == pytest.approx(b, rel=1e-10)

    @pytest.mark.parametrize("x_norm,T", [(0.0, 1.0), (1.0, 1.0), (0.5, 2.0)])
    def test_fiber_marginal_integrates_to_one(self, x_norm, T):
        # mixture-of-widths grid: dense core plus wide tails, the
        # conditional fiber density integrates to 1 at any endpoint
        core = np.linspace(-8.0 * T, 8.0 * T, 801)
        vals = np.array([gamma_h3_oracle([x_norm, 0.0], c, T) for c in core])
        mass = simpson(vals, x=core)
        assert mass == pytest.approx(1.0, abs=2e-4)

    def test_scaling_relation(self):
        # dilating (x, c, T) -> (s x, s^2 c, s^2 T) rescales the density
        # by 1/s^2, the fiber dimension factor
        s = 1.4
        base = gamma_h3_oracle([0.6, 0.0], 0.2, 1.0)
        scaled = gamma_h3_oracle([0.6 * s, 0.0], 0.2 * s**2, s**2)
        assert scaled == pytest.approx(base / s**2, rel=1e-9)


class TestGaussPolynomial:
    def test_algebra_basics(self):
        p = GaussPolynomial.monomial(2, (1, 0), 2.0)
        q = GaussPolynomial.monomial(2, (0, 2), -1.0)
        r = p + q
        assert r.coefficient((1, 0)) == 2.0
        assert r.coefficient((0, 2)) == -1.0
        assert r.degree == 2
        s = r.scale(3.0) - p
        assert s.coefficient((1, 0)) == 4.0

    def test_derivative_and_times_x(self):
        p = GaussPolynomial.monomial(2, (2, 1), 1.0)
        d0 = p.derivative(0)
        assert d0.coefficient((1, 1)) == 2.0
        lifted = p.times_x(1)
        assert lifted.coefficient((2, 2)) == 1.0
        assert p.derivative(0).derivative(0).coefficient((0, 1)) == 2.0

    def test_evaluation(self, rng):
        p = (GaussPolynomial.monomial(3, (1, 1, 0), 2.0)
             + GaussPolynomial.constant(3, -1.0))
        x = rng.standard_normal(3)
        assert p(x) == pytest.approx(2.0 * x[0] * x[1] - 1.0)

    def test_zero_polynomial(self):
        z = GaussPolynomial(2)
        assert z.degree == 0
        assert z.max_abs_coeff() == 0.0


class TestReducedGenerators:
    def rot(self):
        return np.array([[0.0, 1.0], [-1.0, 0.0]])

    def test_radial_part_on_coordinates(self):
        # for the rotation generator Sigma = I: L x1 = -2 x1
        x1 = GaussPolynomial.monomial(2, (1, 0))
        out = apply_reduced_l(self.rot(), x1)
        assert (out - x1.scale(-2.0)).max_abs_coeff() < 1e-13

    def test_radial_part_on_constants(self):
        one = GaussPolynomial.constant(2, 1.0)
        out = apply_reduced_l(self.rot(), one)
        assert (out - one.scale(-1.0)).max_abs_coeff() < 1e-13

    def test_rotation_part_swaps_coordinates(self):
        x1 = GaussPolynomial.monomial(2, (1, 0))
        out = apply_reduced_s(self.rot(), x1)
        expected = GaussPolynomial.monomial(2, (0, 1), 1j)
        assert (out - expected).max_abs_coeff() < 1e-14

    def test_quadratic_eigenfunction(self):
        # |x|^2 - 1 is radial, S kills it; L(|x|^2) = 2 - 2|x|^2 - |x|^2*0...
        p = (GaussPolynomial.monomial(2, (2, 0))
             + GaussPolynomial.monomial(2, (0, 2)))
        s_img = apply_reduced_s(self.rot(), p)
        assert s_img.max_abs_coeff() < 1e-14

    def test_commutator_small_battery(self, rng):
        for n in (2, 3, 4):
            a = random_skew(rng, n)
            assert commutator_residual(a, 4) < 1e-10

    def test_commutator_rotation_exact(self):
        assert commutator_residual(self.rot(), 6) < 1e-12
