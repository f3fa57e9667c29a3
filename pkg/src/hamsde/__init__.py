"""Spectral Galerkin simulator and verification harness for a degenerate
infinite-dimensional stochastic Hamiltonian system with multiplicative noise.
"""

__version__ = "0.1.0"

from .errors import (BlowUpError, ConfigError, ContractViolationError,
                     DegenerateEstimateError)
from .spectral import (INFINITE, GaussianSpec, dirichlet_eigenvalues,
                       evaluate_field, sample_gaussian, gaussian_moment2,
                       gaussian_moment4, fernique_integral)
from .potential import (BUILTIN_POTENTIALS, PhiSpec, RegularizationSpec,
                        make_potential, Phi_n, Phi_n_m, grad_Phi_n,
                        grad_Phi_n_m, psi_m_derivs, phi_m_derivs,
                        moreau_yosida)
from .coefficients import (CoefficientSpec, RegimeReport, KAssumptionReport,
                           lambda22, lambda22_matrix, lambda22_divergence,
                           check_regime, check_K_assumptions)
from .cylinder import (PolyCylinder, ExpQuad, monomial_battery,
                       default_audit_battery)
from .kolmogorov import (OperatorContext, MCEstimate, AuditReport, GibbsSample,
                         apply_S, apply_A_Phi, apply_L_Phi, carre_du_champ,
                         sample_product_gaussian, sample_gibbs_states,
                         mu_phi_expectation, audit_identities)
from .sde import (SCHEMES, DEFAULT_SCHEME, SimConfig, GalerkinSystem,
                  Trajectory, SemigroupEstimate, ResolventEstimate, assemble,
                  step, simulate_path, estimate_semigroup, estimate_resolvent)
from .hypocoercivity import (HypocConstants, CAResult, C1Result, DecayCurve,
                             DecayPoint, ErgodicEstimate, compute_cS,
                             compute_cA, compute_c1, compute_constants,
                             theta2, ergodic_bound, estimate_decay,
                             estimate_ergodic_error)
from .config import ExperimentConfig, PRESETS, preset

__all__ = [
    "__version__",
    "BlowUpError", "ConfigError", "ContractViolationError",
    "DegenerateEstimateError",
    "INFINITE", "GaussianSpec", "dirichlet_eigenvalues", "evaluate_field",
    "sample_gaussian", "gaussian_moment2", "gaussian_moment4",
    "fernique_integral",
    "BUILTIN_POTENTIALS", "PhiSpec", "RegularizationSpec", "make_potential",
    "Phi_n", "Phi_n_m", "grad_Phi_n", "grad_Phi_n_m", "psi_m_derivs",
    "phi_m_derivs", "moreau_yosida",
    "CoefficientSpec", "RegimeReport", "KAssumptionReport", "lambda22",
    "lambda22_matrix", "lambda22_divergence", "check_regime",
    "check_K_assumptions",
    "PolyCylinder", "ExpQuad", "monomial_battery", "default_audit_battery",
    "OperatorContext", "MCEstimate", "AuditReport", "GibbsSample", "apply_S",
    "apply_A_Phi", "apply_L_Phi", "carre_du_champ", "sample_product_gaussian",
    "sample_gibbs_states", "mu_phi_expectation", "audit_identities",
    "SCHEMES", "DEFAULT_SCHEME", "SimConfig", "GalerkinSystem", "Trajectory",
    "SemigroupEstimate", "ResolventEstimate", "assemble", "step",
    "simulate_path", "estimate_semigroup", "estimate_resolvent",
    "HypocConstants", "CAResult", "C1Result", "DecayCurve", "DecayPoint",
    "ErgodicEstimate", "compute_cS", "compute_cA", "compute_c1",
    "compute_constants", "theta2", "ergodic_bound", "estimate_decay",
    "estimate_ergodic_error",
    "ExperimentConfig", "PRESETS", "preset",
]
