"""Effective Hamiltonians of periodically driven systems with a finite dynamical algebra.

The evolution operator over one period is first written in product form
(alpha-flow), then recombined into a single exponential exp(-i beta . h)
(lambda-flow); the effective Hamiltonian is beta / T.
"""

from .drive import DriveSpec, DriveTerm
from .factorization import AlphaTrajectory, FactorizationError, alpha_flow, u_residual
from .lie_core import (AlgebraError, LieAlgebraSpec, ValidationReport, adjoint_rep, expm, m_a,
                       m_matrix, nu_matrix, q_matrix, transform_coefficients, validate_algebra)
from .models import (PRESETS, ModelPreset, build_preset, kapitza, mathieu_reference,
                     optical_lattice, paul_trap, paul_trap_observables)
from .ode import DenseSolution, IntegrationError, IvpProblem, integrate
from .oracle import OracleReport, compare_forms, effective_generator_log, richardson_propagator
from .recombination import (BetaResult, RecombinationError, beta_by_eigenbasis, beta_by_shooting,
                            effective_hamiltonian, lambda_flow, recombine, reduce_quadratic_form,
                            unit_eigenvectors)

__version__ = "0.1.0"

__all__ = [
    "AlgebraError", "AlphaTrajectory", "BetaResult", "DenseSolution", "DriveSpec", "DriveTerm",
    "FactorizationError", "IntegrationError", "IvpProblem", "LieAlgebraSpec", "ModelPreset",
    "OracleReport", "PRESETS", "RecombinationError", "ValidationReport", "adjoint_rep",
    "alpha_flow", "beta_by_eigenbasis", "beta_by_shooting", "build_preset", "compare_forms",
    "effective_generator_log", "effective_hamiltonian", "expm", "integrate", "kapitza",
    "lambda_flow", "m_a", "m_matrix", "mathieu_reference", "nu_matrix", "optical_lattice",
    "paul_trap", "paul_trap_observables", "q_matrix", "recombine", "reduce_quadratic_form",
    "richardson_propagator", "transform_coefficients", "u_residual", "unit_eigenvectors",
    "validate_algebra",
]
