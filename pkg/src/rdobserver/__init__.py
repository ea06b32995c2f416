"""Finite-dimensional observer-based boundary control of 1-D reaction-diffusion PDEs.

Stages: eigenbasis (:mod:`.sturm_liouville`), lifting and stability model
(:mod:`.spectral`), gains (:mod:`.synthesis`), certificates
(:mod:`.feasibility`), input nonlinearities (:mod:`.nonlinearity`) and
closed-loop simulation (:mod:`.simulator`).
"""

__version__ = "0.1.0"

from .sturm_liouville import (Coefficient, OperatorSpec, SpectralBasis, closed_form_basis,
                              solve_eigenproblem, verify_basis)
from .spectral import StabilityModel, build_stability_model, lifting_coefficients, tail_constants
from .synthesis import (GainSet, lemma1_bound_study, place_poles_feedback, place_poles_observer,
                        select_qc, solve_shifted_lyapunov, synthesize_gains, unstable_mode_count)
from .feasibility import (FeasibilityCertificate, SectorSpec, TheoremId, assemble_theta,
                          constructive_certificate, max_sector_size, min_feasible_N,
                          search_certificate, verify_certificate)
from .nonlinearity import (SectorNonlinearity, linear_phi, make_default_phi, rescale_sector,
                           validate_sector)
from .simulator import SimConfig, Trajectory, decay_rate_fit, lyapunov_trace, simulate_closed_loop
from .estimator import ReactionDiffusionController

__all__ = [
    "Coefficient", "OperatorSpec", "SpectralBasis", "closed_form_basis", "solve_eigenproblem",
    "verify_basis", "StabilityModel", "build_stability_model", "lifting_coefficients",
    "tail_constants", "GainSet", "lemma1_bound_study", "place_poles_feedback",
    "place_poles_observer", "select_qc", "solve_shifted_lyapunov", "synthesize_gains",
    "unstable_mode_count", "FeasibilityCertificate", "SectorSpec", "TheoremId", "assemble_theta",
    "constructive_certificate", "max_sector_size", "min_feasible_N", "search_certificate",
    "verify_certificate", "SectorNonlinearity", "linear_phi", "make_default_phi",
    "rescale_sector", "validate_sector", "SimConfig", "Trajectory", "decay_rate_fit",
    "lyapunov_trace", "simulate_closed_loop", "ReactionDiffusionController",
]
