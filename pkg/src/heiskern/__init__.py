"""Monte Carlo and analytic-oracle laboratory for hypoelliptic heat kernels.

Simulates flat Brownian motion together with its matrix-valued quadratic
functionals on step-two nilpotent groups built from skew forms, and checks
the resulting endpoint laws, density identities, translation weights, and
tail bounds against closed-form references.
"""

from .groups import (FormError, SkewForm, GroupElement, CylinderFunction,
                     group_mul, group_inv, hs_norm)
from .paths import TimeGrid, bm_batch, bridge_batch, galerkin_project
from .mc import (McSettings, McEstimate, RngStream, STREAM_BLOCK,
                 run_batches, estimate_mean, binomial_ci)
from .quadratics import (ito_integral, levy_z, quadratic_energy, rho_matrix,
                         rho_batch, yor_gap, ito_second_moment,
                         area_covariance_exact)
from .oracles import (exp_quadratic_oracle, gamma_h3_oracle,
                      quasi_diagonalize, commutator_residual,
                      riccati_quadratic_reference)
from .heat_kernel import (expect_via_j0, gamma_estimate, gamma_profile,
                          inversion_check, draw_fiber, gh_integral)
from .calculus import (psi_weight, ibp_check, right_ibp_check,
                       iterated_invariant_derivative,
                       right_translation_check, left_translation_check,
                       weighted_translation_check)
from .tails import (small_ball_1d, small_ball_operator, rho_inverse_tail,
                    rho_norm_tail, fernique_moment, chaos_tail_constants)
from .experiments import (ConfigError, EXPERIMENTS, run_experiment,
                          list_experiments)
from .reports import ExperimentResult, write_results

__version__ = "0.1.0"

__all__ = [
    "FormError", "SkewForm", "GroupElement", "CylinderFunction",
    "group_mul", "group_inv", "hs_norm",
    "TimeGrid", "bm_batch", "bridge_batch", "galerkin_project",
    "McSettings", "McEstimate", "RngStream", "STREAM_BLOCK",
    "run_batches", "estimate_mean", "binomial_ci",
    "ito_integral", "levy_z", "quadratic_energy", "rho_matrix",
    "rho_batch", "yor_gap", "ito_second_moment", "area_covariance_exact",
    "exp_quadratic_oracle", "gamma_h3_oracle", "quasi_diagonalize",
    "commutator_residual", "riccati_quadratic_reference",
    "expect_via_j0", "gamma_estimate", "gamma_profile", "inversion_check",
    "draw_fiber", "gh_integral",
    "psi_weight", "ibp_check", "right_ibp_check",
    "iterated_invariant_derivative", "right_translation_check",
    "left_translation_check", "weighted_translation_check",
    "small_ball_1d", "small_ball_operator", "rho_inverse_tail",
    "rho_norm_tail", "fernique_moment", "chaos_tail_constants",
    "ConfigError", "EXPERIMENTS", "run_experiment", "list_experiments",
    "ExperimentResult", "write_results",
    "__version__",
]
